//! Moment transfer through the level-1 hitting clock and the `L^p` identity
//! behind the `L^p` budget.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hitting::sample_first_passage_exact;
use crate::quad;
use crate::rng::StreamKey;
use crate::stats::McEstimate;

fn l0(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.map(|x| x.abs().min(1.0)).sum::<f64>() / n as f64
}

fn clock_samples(n: usize, key: StreamKey) -> Vec<f64> {
    let mut rng = key.rng();
    (0..n)
        .map(|_| sample_first_passage_exact(1.0, &mut rng))
        .collect()
}

/// `C = sup_κ E min(κ h(τ)^{1/2}, 1) / min(κ, 1)^{1/2}` over the given `κ`,
/// with `h(τ)` the clock at the first passage of level 1.
pub fn calibrate_transfer_constant(kappas: &[f64], samples: usize, key: StreamKey) -> Result<f64> {
    if kappas.is_empty() || samples == 0 {
        return Err(Error::EmptyInput("transfer calibration"));
    }
    let h = clock_samples(samples, key);
    Ok(kappas
        .iter()
        .map(|k| l0(h.iter().map(|t| k * t.sqrt()), samples) / k.min(1.0).sqrt())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferCheck {
    /// `‖θ h(τ)^{1/2}‖_{L⁰}` with `h(τ)` independent of `θ`.
    pub lhs: f64,
    /// `C ‖θ‖_{L⁰}^{1/2}`
    pub rhs: f64,
    pub pass: bool,
}

pub fn transfer_check(theta: &[f64], constant: f64, key: StreamKey) -> Result<TransferCheck> {
    if theta.is_empty() {
        return Err(Error::EmptyInput("transfer samples"));
    }
    let n = theta.len();
    let h = clock_samples(n, key);
    let lhs = l0(theta.iter().zip(&h).map(|(t, h)| t * h.sqrt()), n);
    let rhs = constant * l0(theta.iter().cloned(), n).sqrt();
    Ok(TransferCheck {
        lhs,
        rhs,
        pass: lhs <= rhs,
    })
}

/// `C (‖ξ_1‖_{L⁰}^{1/2} + 5^{1/2}/2)`, the bound on `Σ_n ‖η_n‖_{L⁰}` under
/// budgets `4^{-n}`.
pub fn eta_budget_bound(constant: f64, xi1_l0: f64) -> f64 {
    constant * (xi1_l0.sqrt() + 5f64.sqrt() / 2.0)
}

/// `∫_0^∞ Ê min(θ t^{-1/p}, 1) dt` by quadrature over the empirical
/// expectation; the standard error comes from the per-sample integrals
/// `θ^p / (1-p)`.
pub fn lp_identity_lhs(theta: &[f64], p: f64) -> Result<McEstimate> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfDomain {
            what: "L^p exponent",
            value: p,
        });
    }
    if theta.is_empty() {
        return Err(Error::EmptyInput("theta samples"));
    }
    let mut s: Vec<f64> = theta.iter().map(|x| x.abs()).collect();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut prefix = Vec::with_capacity(s.len() + 1);
    prefix.push(0.0);
    for x in &s {
        prefix.push(prefix.last().unwrap() + x);
    }
    let expected_min = |t: f64| {
        if t <= 0.0 {
            return 1.0;
        }
        let scale = t.powf(-1.0 / p);
        let cut = s.partition_point(|x| x * scale < 1.0);
        (prefix[cut] * scale + (s.len() - cut) as f64) / n
    };
    let mean = quad::integrate_to_infinity(expected_min, 0.0, 1e-10);
    let per: Vec<f64> = s.iter().map(|x| x.powf(p) / (1.0 - p)).collect();
    let se = McEstimate::from_samples(&per).stderr;
    Ok(McEstimate {
        mean,
        stderr: se,
        n: s.len(),
    })
}

/// `E|Z|^p / (1-p)` for standard normal `Z`, by quadrature against the
/// folded-normal density.
pub fn lp_identity_rhs(p: f64) -> f64 {
    let dens = |x: f64| (2.0 / PI).sqrt() * (-0.5 * x * x).exp();
    quad::integrate(|x| x.powf(p) * dens(x), 0.0, 12.0, 1e-13) / (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use statrs::function::gamma::gamma;

    #[test]
    fn folded_normal_moment_matches_gamma() {
        for &p in &[0.25, 0.5, 0.9] {
            let closed = 2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt();
            assert!((lp_identity_rhs(p) * (1.0 - p) - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn lp_identity() {
        let mut rng = StreamKey::new(1).rng();
        let th: Vec<f64> = (0..20_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
            .collect();
        for &p in &[0.5, 0.75] {
            let lhs = lp_identity_lhs(&th, p).unwrap();
            assert!(lhs.within(lp_identity_rhs(p), 3.0), "p={p} {lhs:?} {}", lp_identity_rhs(p));
        }
        assert!(lp_identity_lhs(&th, 1.0).is_err());
    }

    #[test]
    fn transfer_constant_and_band() {
        let kappas: Vec<f64> = (-12..=6).map(|k| 2f64.powi(k)).collect();
        let c = calibrate_transfer_constant(&kappas, 100_000, StreamKey::new(2)).unwrap();
        assert!(c > 0.5 && c < 1.5, "{c}");
        let mut rng = StreamKey::new(3).rng();
        for sigma in [0.01, 0.3, 1.0, 5.0] {
            let th: Vec<f64> = (0..50_000).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            let r = transfer_check(&th, c, StreamKey::new(4)).unwrap();
            assert!(r.pass, "sigma={sigma} {r:?}");
        }
        assert!((eta_budget_bound(1.0, 0.0) - 1.118).abs() < 1e-3);
    }
}
