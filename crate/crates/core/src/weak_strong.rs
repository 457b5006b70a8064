//! Two-sided moment and tail estimates for vector stochastic integrals, the
//! weak/strong identity at finite dimension, and recovery of the driving
//! noise from a martingale.
//!
//! All checks run in Euclidean space, where the integrand norm is the plain
//! `L²(0, T; R^d)` norm and the `p = 2` moment sandwich reduces to the Itô
//! isometry plus Doob's maximal inequality: `E‖Φ‖² ≤ E sup_t ‖∫_0^t Φ dW‖² ≤
//! 4 E‖Φ‖²`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::paths::{
    ito_path, realized_qv, sample_path, vector_ito_path, BrownianPath, VectorPathValue,
};
use crate::rng::{map_paths, StreamKey};
use crate::stats::{kurtosis, McEstimate};

/// Adapted step integrands used by the checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrandFamily {
    /// `(cos 2πt/T, sin 2πt/T)/sqrt(T)`, with `‖Φ‖²_{L²} = 1`.
    Deterministic,
    /// `(1, ΔW_{k-1}/sqrt(Δt_{k-1}))`
    PreviousIncrement,
    /// `(W(t_k), cos W(t_k))`
    RunningValue,
    Zero,
}

impl IntegrandFamily {
    pub fn dim(&self) -> usize {
        match self {
            IntegrandFamily::Zero => 1,
            _ => 2,
        }
    }

    /// Integrand values on every cell of `path`.
    pub fn build(&self, path: &BrownianPath) -> Vec<VectorPathValue> {
        let times = path.times();
        let t0 = times[0];
        let span = path.grid().last() - t0;
        let incs = path.increments();
        let w = path.values();
        (0..path.n_cells())
            .map(|k| {
                let t = times[k];
                VectorPathValue(match self {
                    IntegrandFamily::Deterministic => {
                        let ang = 2.0 * PI * (t - t0) / span;
                        vec![ang.cos() / span.sqrt(), ang.sin() / span.sqrt()]
                    }
                    IntegrandFamily::PreviousIncrement => {
                        if k == 0 {
                            vec![1.0, 0.0]
                        } else {
                            vec![1.0, incs[k - 1] / (times[k] - times[k - 1]).sqrt()]
                        }
                    }
                    IntegrandFamily::RunningValue => vec![w[k], w[k].cos()],
                    IntegrandFamily::Zero => vec![0.0],
                })
            })
            .collect()
    }
}

/// `‖Φ‖²_{L²} = Σ_k ‖Φ_k‖² Δt_k`
pub fn gamma_norm_sq(path: &BrownianPath, phi: &[VectorPathValue]) -> f64 {
    phi.iter()
        .zip(path.grid().steps())
        .map(|(v, dt)| v.norm().powi(2) * dt)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyReport {
    /// `max_{x, t} |⟨∫_0^t Φ dW, x⟩ - ∫_0^t ⟨Φ, x⟩ dW|` over the standard basis.
    pub max_abs_error: f64,
    /// Largest coordinate of the vector integral, for scale.
    pub scale: f64,
    pub pass: bool,
}

/// Compare the vector integral against the scalar integrals of its basis
/// pairings at every grid time.
pub fn weak_strong_consistency(phi: &[VectorPathValue], path: &BrownianPath) -> Result<ConsistencyReport> {
    let vector = vector_ito_path(path, phi)?;
    let dim = phi.first().map(|v| v.dim()).unwrap_or(0);
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..dim {
        let coord: Vec<f64> = phi.iter().map(|v| v.0[i]).collect();
        let scalar = ito_path(path, &coord)?;
        for (v, s) in vector.iter().zip(&scalar) {
            err = err.max((v.0[i] - s).abs());
            scale = scale.max(s.abs());
        }
    }
    Ok(ConsistencyReport {
        max_abs_error: err,
        scale,
        pass: err <= 1e-12 * scale.max(1.0),
    })
}

/// Per-path quantities behind the moment and tail checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathStats {
    pub norm_sq: f64,
    /// `max_k ‖∫_0^{t_k} Φ dW‖²`
    pub sup_sq: f64,
    pub terminal_sq: f64,
    pub consistency_error: f64,
    pub consistency_pass: bool,
}

pub fn path_stats(family: IntegrandFamily, grid: &TimeGrid, paths: usize, key: StreamKey) -> Result<Vec<PathStats>> {
    map_paths(paths, key, |_, k| {
        let path = sample_path(grid, k);
        let phi = family.build(&path);
        let running = vector_ito_path(&path, &phi)?;
        let sup_sq = running.iter().map(|v| v.norm().powi(2)).fold(0.0, f64::max);
        let c = weak_strong_consistency(&phi, &path)?;
        Ok(PathStats {
            norm_sq: gamma_norm_sq(&path, &phi),
            sup_sq,
            terminal_sq: running.last().unwrap().norm().powi(2),
            consistency_error: c.max_abs_error,
            consistency_pass: c.pass,
        })
    })
    .into_iter()
    .collect()
}

/// Constants of the moment sandwich `c^p E‖Φ‖^p ≤ E sup‖∫Φ‖^p ≤ C^p E‖Φ‖^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum BoundMode {
    /// `p = 2`, `c = 1`, `C = 2`.
    Strict,
    /// Any `p` with user-supplied constants.
    Exploratory { p: f64, lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub p: f64,
    /// `E‖Φ‖^p`
    pub norm_moment: McEstimate,
    /// `E sup_t ‖∫_0^t Φ dW‖^p`
    pub sup_moment: McEstimate,
    /// `E‖∫_0^T Φ dW‖^p`
    pub terminal_moment: McEstimate,
    pub lower_constant: f64,
    pub upper_constant: f64,
    pub beta: f64,
    pub lower_pass: bool,
    pub upper_pass: bool,
    /// Paired test of `E‖∫Φ‖² = E‖Φ‖²`; only meaningful at `p = 2`.
    pub isometry_pass: bool,
    /// `rhs - lhs` of the upper inequality.
    pub margin: f64,
}

impl BoundCheck {
    pub fn pass(&self) -> bool {
        self.lower_pass && self.upper_pass && self.isometry_pass
    }
}

fn paired_nonneg(xs: &[f64]) -> bool {
    let m = McEstimate::from_samples(xs);
    m.mean >= -3.0 * m.stderr
}

pub fn two_sided_check(stats: &[PathStats], mode: BoundMode) -> Result<BoundCheck> {
    if stats.len() < 2 {
        return Err(Error::EmptyInput("two-sided check paths"));
    }
    let (p, lo, up) = match mode {
        BoundMode::Strict => (2.0, 1.0, 2.0),
        BoundMode::Exploratory { p, lower, upper } => (p, lower, upper),
    };
    let beta = 1.0;
    let pw = |sq: f64| sq.powf(p / 2.0);
    let norm: Vec<f64> = stats.iter().map(|s| pw(s.norm_sq)).collect();
    let sup: Vec<f64> = stats.iter().map(|s| pw(s.sup_sq)).collect();
    let term: Vec<f64> = stats.iter().map(|s| pw(s.terminal_sq)).collect();
    let lo_p = lo.powf(p);
    let up_p = (up * beta).powf(p);
    let lower: Vec<f64> = sup.iter().zip(&norm).map(|(s, n)| s - lo_p * n).collect();
    let upper: Vec<f64> = sup.iter().zip(&norm).map(|(s, n)| up_p * n - s).collect();
    let iso: Vec<f64> = term.iter().zip(&norm).map(|(t, n)| t - n).collect();
    let iso_est = McEstimate::from_samples(&iso);
    let zero = norm.iter().all(|n| *n == 0.0) && sup.iter().all(|s| *s == 0.0);
    Ok(BoundCheck {
        p,
        norm_moment: McEstimate::from_samples(&norm),
        sup_moment: McEstimate::from_samples(&sup),
        terminal_moment: McEstimate::from_samples(&term),
        lower_constant: lo,
        upper_constant: up,
        beta,
        lower_pass: zero || paired_nonneg(&lower),
        upper_pass: zero || paired_nonneg(&upper),
        isometry_pass: zero || p != 2.0 || iso_est.within(0.0, 3.0),
        margin: McEstimate::from_samples(&upper).mean,
    })
}

/// Strict entry point: rejects `p ≠ 2`.
pub fn strict_p(p: f64) -> Result<BoundMode> {
    if p == 2.0 {
        Ok(BoundMode::Strict)
    } else {
        Err(Error::Unsupported(format!(
            "moment exponent {p} needs exploratory mode with explicit constants"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailTransferRow {
    pub eps: f64,
    pub delta: f64,
    /// `P(sup‖∫Φ‖ > ε)`
    pub sup_tail: McEstimate,
    /// `4 δ²/ε² + P(‖Φ‖ ≥ δ)`
    pub sup_bound: f64,
    /// `P(‖Φ‖ > ε)`
    pub norm_tail: McEstimate,
    /// `δ²/ε² + P(sup‖∫Φ‖ ≥ δ)`
    pub norm_bound: f64,
    pub pass: bool,
}

/// Both tail transfers at each `(ε, δ)`, tested with paired indicators.
pub fn tail_transfer_check(stats: &[PathStats], eps: &[f64], deltas: &[f64]) -> Result<Vec<TailTransferRow>> {
    if stats.len() < 2 {
        return Err(Error::EmptyInput("tail transfer paths"));
    }
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let mut rows = Vec::new();
    for &e in eps {
        for &d in deltas {
            let up = 4.0 * d * d / (e * e);
            let lo = d * d / (e * e);
            let a: Vec<f64> = stats.iter().map(|s| ind(s.sup_sq > e * e)).collect();
            let b: Vec<f64> = stats.iter().map(|s| ind(s.norm_sq >= d * d)).collect();
            let c: Vec<f64> = stats.iter().map(|s| ind(s.norm_sq > e * e)).collect();
            let f: Vec<f64> = stats.iter().map(|s| ind(s.sup_sq >= d * d)).collect();
            let first: Vec<f64> = a.iter().zip(&b).map(|(x, y)| up + y - x).collect();
            let second: Vec<f64> = c.iter().zip(&f).map(|(x, y)| lo + y - x).collect();
            let pb = McEstimate::from_samples(&b).mean;
            let pf = McEstimate::from_samples(&f).mean;
            rows.push(TailTransferRow {
                eps: e,
                delta: d,
                sup_tail: McEstimate::from_samples(&a),
                sup_bound: up + pb,
                norm_tail: McEstimate::from_samples(&c),
                norm_bound: lo + pf,
                pass: paired_nonneg(&first) && paired_nonneg(&second),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoobReport {
    pub realized_qv: f64,
    /// `Σ g_k² Δt_k`
    pub predictable_qv: f64,
    /// `max_k |Σ_{j<k} g_j ΔŴ_j - M_k| / max(|M_k|, 1)`
    pub round_trip_error: f64,
}

/// `ΔŴ_k = ΔM_k / g_k`. `m` holds `M` at every grid time with `M_0 = 0`.
pub fn doob_recover(grid: &TimeGrid, m: &[f64], g: &[f64], floor: f64) -> Result<(BrownianPath, DoobReport)> {
    if m.len() != grid.n_cells() + 1 {
        return Err(Error::LengthMismatch {
            expected: grid.n_cells() + 1,
            found: m.len(),
        });
    }
    if g.len() != grid.n_cells() {
        return Err(Error::LengthMismatch {
            expected: grid.n_cells(),
            found: g.len(),
        });
    }
    if let Some((index, value)) = g.iter().enumerate().find(|(_, v)| !(v.abs() >= floor)) {
        return Err(Error::BelowFloor {
            index,
            value: *value,
            floor,
        });
    }
    let incs: Vec<f64> = m.windows(2).zip(g).map(|(w, gk)| (w[1] - w[0]) / gk).collect();
    let w_hat = BrownianPath::from_increments(grid.clone(), incs, StreamKey::new(0))?;
    let again = ito_path(&w_hat, g)?;
    let round_trip_error = again
        .iter()
        .zip(m)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let predictable_qv = g.iter().zip(grid.steps()).map(|(gk, dt)| gk * gk * dt).sum();
    Ok((
        w_hat,
        DoobReport {
            realized_qv: realized_qv(m),
            predictable_qv,
            round_trip_error,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoobExperiment {
    /// Realized QV of `M` per path.
    pub qv: McEstimate,
    pub predictable_qv: f64,
    /// `ΔŴ_k² / Δt_k` pooled over cells and paths; should be 1.
    pub variance_ratio: McEstimate,
    /// Raw kurtosis of the standardized recovered increments.
    pub kurtosis: f64,
    pub max_round_trip_error: f64,
    #[serde(skip)]
    pub qv_samples: Vec<f64>,
}

/// Simulate `M = ∫ g dW` on `grid`, recover `Ŵ` and pool the checks.
pub fn doob_experiment(
    grid: &TimeGrid,
    g: impl Fn(f64) -> f64 + Sync,
    floor: f64,
    paths: usize,
    key: StreamKey,
) -> Result<DoobExperiment> {
    let gv: Vec<f64> = grid.times()[..grid.n_cells()].iter().map(|t| g(*t)).collect();
    let per: Vec<Result<(DoobReport, Vec<f64>)>> = map_paths(paths, key, |_, k| {
        let w = sample_path(grid, k);
        let m = ito_path(&w, &gv)?;
        let (w_hat, rep) = doob_recover(grid, &m, &gv, floor)?;
        let z = w_hat
            .increments()
            .iter()
            .zip(grid.steps())
            .map(|(dw, dt)| dw / dt.sqrt())
            .collect();
        Ok((rep, z))
    });
    let mut qv = Vec::with_capacity(paths);
    let mut z = Vec::with_capacity(paths * grid.n_cells());
    let mut rt: f64 = 0.0;
    let mut pq = 0.0;
    for r in per {
        let (rep, zs) = r?;
        qv.push(rep.realized_qv);
        rt = rt.max(rep.round_trip_error);
        pq = rep.predictable_qv;
        z.extend(zs);
    }
    let sq: Vec<f64> = z.iter().map(|x| x * x).collect();
    Ok(DoobExperiment {
        qv: McEstimate::from_samples(&qv),
        predictable_qv: pq,
        variance_ratio: McEstimate::from_samples(&sq),
        kurtosis: kurtosis(&z),
        max_round_trip_error: rt,
        qv_samples: qv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::uniform(0.0, 1.0, 64).unwrap()
    }

    #[test]
    fn deterministic_norm_is_one() {
        let p = sample_path(&grid(), StreamKey::new(1));
        let phi = IntegrandFamily::Deterministic.build(&p);
        assert!((gamma_norm_sq(&p, &phi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sandwich_and_isometry_for_all_families() {
        for fam in [
            IntegrandFamily::Deterministic,
            IntegrandFamily::PreviousIncrement,
            IntegrandFamily::RunningValue,
            IntegrandFamily::Zero,
        ] {
            let s = path_stats(fam, &grid(), 20_000, StreamKey::new(2)).unwrap();
            let c = two_sided_check(&s, BoundMode::Strict).unwrap();
            assert!(c.pass(), "{fam:?} {c:?}");
            assert!(s.iter().all(|x| x.consistency_pass));
            if fam == IntegrandFamily::Deterministic {
                assert!(c.terminal_moment.within(1.0, 3.0));
                assert!(c.sup_moment.mean >= 1.0 && c.sup_moment.mean <= 4.0);
            }
            if fam == IntegrandFamily::Zero {
                assert_eq!(c.sup_moment.mean, 0.0);
                assert_eq!(c.norm_moment.mean, 0.0);
            }
        }
    }

    #[test]
    fn strict_only_two() {
        assert!(strict_p(2.0).is_ok());
        assert!(strict_p(1.0).is_err());
        let s = path_stats(IntegrandFamily::Deterministic, &grid(), 2000, StreamKey::new(3)).unwrap();
        let c = two_sided_check(&s, BoundMode::Exploratory { p: 1.0, lower: 0.5, upper: 3.0 }).unwrap();
        assert!(c.lower_pass && c.upper_pass);
    }

    #[test]
    fn tail_transfer() {
        let s = path_stats(IntegrandFamily::RunningValue, &grid(), 20_000, StreamKey::new(4)).unwrap();
        let rows = tail_transfer_check(&s, &[0.25, 0.5, 1.0, 2.0], &[0.1, 0.3, 1.0, 1e6]).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
        let det = path_stats(IntegrandFamily::Deterministic, &grid(), 2000, StreamKey::new(5)).unwrap();
        let r = tail_transfer_check(&det, &[1.0], &[0.5]).unwrap();
        assert!((r[0].sup_bound - (1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn consistency_with_zeroed_coordinate() {
        let p = sample_path(&grid(), StreamKey::new(6));
        let mut phi = IntegrandFamily::RunningValue.build(&p);
        for v in &mut phi {
            v.0[1] = 0.0;
        }
        let c = weak_strong_consistency(&phi, &p).unwrap();
        assert!(c.pass);
        let zero: Vec<f64> = phi.iter().map(|v| v.0[1]).collect();
        assert!(ito_path(&p, &zero).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn doob_examples() {
        let g = grid();
        let w = sample_path(&g, StreamKey::new(7));
        let two = vec![2.0; g.n_cells()];
        let m: Vec<f64> = w.values().iter().map(|v| 2.0 * v).collect();
        let (w_hat, rep) = doob_recover(&g, &m, &two, 1e-6).unwrap();
        let dw: Vec<f64> = w.values().windows(2).map(|v| v[1] - v[0]).collect();
        assert_eq!(w_hat.increments(), &dw[..]);
        assert!(rep.round_trip_error < 1e-15);
        let mut bad = two.clone();
        bad[3] = 0.0;
        assert!(matches!(doob_recover(&g, &m, &bad, 1e-6), Err(Error::BelowFloor { index: 3, .. })));
        let fine = TimeGrid::uniform(0.0, 1.0, 1000).unwrap();
        let e = doob_experiment(&fine, |s| 1.0 + s, 1e-6, 1000, StreamKey::new(8)).unwrap();
        assert!((e.qv.mean / (7.0 / 3.0) - 1.0).abs() < 0.02);
        assert!((e.predictable_qv - 7.0 / 3.0).abs() < 2e-3);
        assert!(e.variance_ratio.within(1.0, 3.0));
        assert!((e.kurtosis - 3.0).abs() < 0.1);
        assert!(e.max_round_trip_error < 1e-10);
    }
}
