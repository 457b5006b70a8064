//! Suprema of heavy-tailed series `sup_n c_n ξ_n`.
//!
//! For i.i.d. `ξ_n` with survival of order `1/t`, the supremum is a.s.
//! finite exactly when `Σ c_n < ∞`. At finite `N` this shows up through the
//! product formula `P(sup_{n≤N} c_n ξ_n ≤ λ) = Π_n (1 - P(ξ > λ/c_n))`,
//! which stays bounded below uniformly in `N` in the summable case and tends
//! to zero otherwise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hitting::first_passage_from_normal;
use crate::rng::{map_paths, StreamKey};
use crate::stats::{ks_statistic, median, sorted};

/// `C` in `C^{-1}(t+1)^{-1} <= P(ξ > t) <= C (t+1)^{-1}` for the built-in law.
pub const BUILTIN_TAIL_CONSTANT: f64 = 2.0;

/// Law of the `ξ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum XiLaw {
    /// `ξ = (1+θ)^{1/2}` with `P(θ > t) = (2/π) arctan(1/sqrt(t))`, i.e. `θ`
    /// is the first passage time of an independent standard Gaussian level.
    Builtin,
    /// `P(ξ > t) = t^{-α}` for `t >= 1`.
    Pareto { alpha: f64 },
}

impl XiLaw {
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            XiLaw::Builtin => builtin_xi_survival(x),
            XiLaw::Pareto { alpha } => {
                if x <= 1.0 {
                    1.0
                } else {
                    x.powf(-alpha)
                }
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            XiLaw::Builtin => (1.0 + sample_theta(rng)).sqrt(),
            XiLaw::Pareto { alpha } => (1.0 - rng.random::<f64>()).powf(-1.0 / alpha),
        }
    }
}

/// `P(θ > t)` for the first passage `θ` of a standard Gaussian level.
pub fn theta_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    2.0 / PI * (1.0 / t.sqrt()).atan()
}

pub fn builtin_xi_survival(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else {
        2.0 / PI * (1.0 / (x * x - 1.0).sqrt()).atan()
    }
}

/// Exact draw of `θ`: Gaussian level `z1`, passage `z1²/z2²`.
pub fn sample_theta<R: Rng>(rng: &mut R) -> f64 {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    first_passage_from_normal(z1, z2)
}

/// How the coefficients `c_n` are generated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CoefficientRule {
    /// `c_n = ratio^n`
    Geometric { ratio: f64 },
    /// `c_n = 1/n`
    Harmonic,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSequenceSpec {
    c: Vec<f64>,
    n: usize,
    law: XiLaw,
}

impl TailSequenceSpec {
    /// Coefficients generated by a rule that underflow to zero are dropped:
    /// they cannot change the supremum at double precision.
    pub fn from_rule(rule: &CoefficientRule, n: usize, law: XiLaw) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("tail sequence length"));
        }
        let c: Vec<f64> = match rule {
            CoefficientRule::Geometric { ratio } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::OutOfDomain {
                        what: "geometric ratio",
                        value: *ratio,
                    });
                }
                (1..=n)
                    .map(|k| ratio.powi(k as i32))
                    .take_while(|c| *c > 0.0)
                    .collect()
            }
            CoefficientRule::Harmonic => (1..=n).map(|k| 1.0 / k as f64).collect(),
            CoefficientRule::Explicit(c) => {
                if c.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        found: c.len(),
                    });
                }
                c.clone()
            }
        };
        Self::build(c, n, law)
    }

    pub fn new(c: Vec<f64>, law: XiLaw) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::EmptyInput("tail sequence coefficients"));
        }
        Self::build(c, n, law)
    }

    fn build(c: Vec<f64>, n: usize, law: XiLaw) -> Result<Self> {
        if let Some(bad) = c.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
            return Err(Error::OutOfDomain {
                what: "coefficient c_n",
                value: *bad,
            });
        }
        Ok(Self { c, n, law })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    /// Nominal truncation length `N`.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn law(&self) -> XiLaw {
        self.law
    }

    pub fn sum_c(&self) -> f64 {
        self.c.iter().sum()
    }

    /// `p_n(λ) = P(ξ > λ/c_n)`
    pub fn exceedance(&self, n: usize, lambda: f64) -> f64 {
        self.law.survival(lambda / self.c[n])
    }
}

/// `Π_{n≤N} (1 - p_n(λ))`, evaluated as `exp Σ ln(1 - p_n)`.
pub fn product_cdf(spec: &TailSequenceSpec, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::OutOfDomain {
            what: "lambda",
            value: lambda,
        });
    }
    let mut log = 0.0;
    for n in 0..spec.c.len() {
        let p = spec.exceedance(n, lambda);
        if p >= 1.0 {
            return Ok(0.0);
        }
        log += (-p).ln_1p();
    }
    Ok(log.exp())
}

/// `exp(-K/λ)` with `K = 2 C Σ c_n`, valid for `λ >= 2C` where every
/// `p_n(λ) <= 1/2` and hence `-ln(1 - p_n) <= 2 p_n <= 2 C c_n/λ`.
pub fn product_cdf_lower_bound(spec: &TailSequenceSpec, lambda: f64, tail_constant: f64) -> Option<f64> {
    if lambda < 2.0 * tail_constant {
        return None;
    }
    let k = 2.0 * tail_constant * spec.sum_c();
    Some((-k / lambda).exp())
}

/// The `λ` at which `product_cdf` crosses `q`, by bisection.
pub fn product_quantile(spec: &TailSequenceSpec, q: f64) -> Result<f64> {
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while product_cdf(spec, hi)? < q {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::OutOfDomain {
                what: "quantile level",
                value: q,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if product_cdf(spec, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Brute-force draws of `sup_{n≤N} c_n ξ_n`, one independent stream per sample.
pub fn sample_sup(spec: &TailSequenceSpec, paths: usize, key: StreamKey) -> Vec<f64> {
    map_paths(paths, key, |_, k| {
        let mut rng = k.rng();
        spec.c
            .iter()
            .map(|c| c * spec.law.sample(&mut rng))
            .fold(0.0, f64::max)
    })
}

/// Draws of `(Σ (c_n ξ_n)^p)^{1/p}`; exploratory output only.
pub fn sample_lp_norm(spec: &TailSequenceSpec, p: f64, paths: usize, key: StreamKey) -> Vec<f64> {
    map_paths(paths, key, |_, k| {
        let mut rng = k.rng();
        spec.c
            .iter()
            .map(|c| (c * spec.law.sample(&mut rng)).powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Bounded,
    Divergent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub n: usize,
    pub sum_c: f64,
    pub empirical_median: f64,
    pub analytic_median: f64,
    pub ks: f64,
    /// `(λ, Π(1 - p_n(λ)))` on the requested points.
    pub analytic_cdf: Vec<(f64, f64)>,
    pub verdict: Regime,
    #[serde(skip)]
    pub sup_samples: Vec<f64>,
}

/// Finite-`N` verdict: bounded when the second half of the coefficients
/// carries less than 1% of their sum.
pub fn regime_of(spec: &TailSequenceSpec) -> Regime {
    let half = spec.n / 2;
    let tail: f64 = spec.c.iter().skip(half).sum();
    if tail <= 0.01 * spec.sum_c() {
        Regime::Bounded
    } else {
        Regime::Divergent
    }
}

pub fn dichotomy_report(
    spec: &TailSequenceSpec,
    paths: usize,
    key: StreamKey,
    lambdas: &[f64],
) -> Result<DichotomyReport> {
    if paths == 0 {
        return Err(Error::EmptyInput("paths"));
    }
    let samples = sample_sup(spec, paths, key);
    let s = sorted(&samples);
    let ks = ks_statistic(&s, |x| if x > 0.0 { product_cdf(spec, x).unwrap_or(0.0) } else { 0.0 })?;
    let analytic_cdf = lambdas
        .iter()
        .map(|l| product_cdf(spec, *l).map(|f| (*l, f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DichotomyReport {
        n: spec.len(),
        sum_c: spec.sum_c(),
        empirical_median: median(&samples),
        analytic_median: product_quantile(spec, 0.5)?,
        ks,
        analytic_cdf,
        verdict: regime_of(spec),
        sup_samples: samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{tail_index, McEstimate};

    fn builtin(rule: CoefficientRule, n: usize) -> TailSequenceSpec {
        TailSequenceSpec::from_rule(&rule, n, XiLaw::Builtin).unwrap()
    }

    #[test]
    fn theta_sampler_matches_arctan_law() {
        let mut rng = StreamKey::new(1).rng();
        let th: Vec<f64> = (0..100_000).map(|_| sample_theta(&mut rng)).collect();
        let d = ks_statistic(&sorted(&th), |t| 1.0 - theta_survival(t)).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn builtin_band() {
        let c = BUILTIN_TAIL_CONSTANT;
        let mut t = 0.0;
        while t <= 1000.0 {
            let s = builtin_xi_survival(t);
            assert!(s <= c / (t + 1.0) + 1e-12 && s >= 1.0 / (c * (t + 1.0)), "t={t}");
            t += 0.25;
        }
        let mut rng = StreamKey::new(2).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| XiLaw::Builtin.sample(&mut rng)).collect();
        for &t in &[1.0, 3.0, 10.0, 100.0, 1000.0] {
            let p = McEstimate::proportion(&xs, |x| *x > t);
            assert!(p.mean <= c / (t + 1.0) + 3.0 * p.stderr);
            assert!(p.mean >= 1.0 / (c * (t + 1.0)) - 3.0 * p.stderr, "t={t} {p:?}");
        }
    }

    #[test]
    fn builtin_tail_index_is_one() {
        let mut rng = StreamKey::new(3).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| XiLaw::Builtin.sample(&mut rng)).collect();
        let est = tail_index(&xs, &[10.0, 30.0, 100.0, 300.0, 1000.0]).unwrap();
        assert!((est.index - 1.0).abs() < 0.1, "{est:?}");
    }

    #[test]
    fn product_cdf_examples() {
        let s = builtin(CoefficientRule::Harmonic, 10);
        assert_eq!(product_cdf(&s, 1e300).unwrap(), 1.0);
        assert!(product_cdf(&s, 0.0).is_err());
        let one = TailSequenceSpec::new(vec![1.0], XiLaw::Builtin).unwrap();
        let mut rng = StreamKey::new(4).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| XiLaw::Builtin.sample(&mut rng)).collect();
        for &l in &[1.5, 3.0, 10.0] {
            let p = McEstimate::proportion(&xs, |x| *x <= l);
            assert!(p.within(product_cdf(&one, l).unwrap(), 3.0), "{l}");
        }
    }

    #[test]
    fn geometric_lower_bound_term_by_term() {
        let s = builtin(CoefficientRule::Geometric { ratio: 0.5 }, 64);
        let c = BUILTIN_TAIL_CONSTANT;
        for &l in &[4.0, 5.0, 10.0, 100.0] {
            // Each step of the chain separately.
            let mut chain = 0.0;
            for n in 0..s.coefficients().len() {
                let p = s.exceedance(n, l);
                assert!(p <= c * s.coefficients()[n] / l + 1e-15);
                assert!(-(-p).ln_1p() <= 2.0 * p + 1e-15);
                chain += 2.0 * c * s.coefficients()[n] / l;
            }
            let lb = product_cdf_lower_bound(&s, l, c).unwrap();
            assert!(((-chain).exp() - lb).abs() < 1e-12);
            assert!(product_cdf(&s, l).unwrap() >= lb);
        }
        assert!(product_cdf_lower_bound(&s, 1.0, c).is_none());
    }

    #[test]
    fn dichotomy_in_n() {
        let l = 10.0;
        let mut prev_h = 1.0;
        let mut prev_g = 1.0;
        for n in [10, 100, 1000, 10_000, 100_000] {
            let hs = builtin(CoefficientRule::Harmonic, n);
            let h = product_cdf(&hs, l).unwrap();
            // Small-p_n asymptotics: ln Π(1 - p_n) ≈ -(2/π) Σ c_n / λ.
            let approx = -2.0 / PI * hs.sum_c() / l;
            assert!((h.ln() / approx - 1.0).abs() < 0.02, "{n}");
            let g = builtin(CoefficientRule::Geometric { ratio: 0.5 }, n);
            let gv = product_cdf(&g, l).unwrap();
            assert!(h <= prev_h && gv <= prev_g);
            assert!(gv >= product_cdf_lower_bound(&g, l, BUILTIN_TAIL_CONSTANT).unwrap());
            prev_h = h;
            prev_g = gv;
        }
        let far = product_cdf(&builtin(CoefficientRule::Harmonic, 1_000_000), 1.5).unwrap();
        assert!(far < 0.01, "{far}");
        assert_eq!(regime_of(&builtin(CoefficientRule::Harmonic, 100)), Regime::Divergent);
        assert_eq!(
            regime_of(&builtin(CoefficientRule::Geometric { ratio: 0.5 }, 100)),
            Regime::Bounded
        );
    }

    #[test]
    fn underflowing_coefficients_are_dropped() {
        let g = builtin(CoefficientRule::Geometric { ratio: 0.5 }, 4096);
        assert_eq!(g.len(), 4096);
        assert!(g.coefficients().len() < 1100);
        assert!(TailSequenceSpec::new(vec![0.5, 0.0], XiLaw::Builtin).is_err());
        assert!(TailSequenceSpec::new(vec![1.5], XiLaw::Builtin).is_err());
    }

    #[test]
    fn tiny_coefficients_give_tiny_sup() {
        let s = TailSequenceSpec::new(vec![1e-12; 20], XiLaw::Builtin).unwrap();
        let sup = sample_sup(&s, 1000, StreamKey::new(5));
        assert!(median(&sup) < 1e-10);
    }

    #[test]
    fn monte_carlo_matches_product_formula() {
        for rule in [CoefficientRule::Harmonic, CoefficientRule::Geometric { ratio: 0.5 }] {
            let s = builtin(rule, 200);
            let r = dichotomy_report(&s, 10_000, StreamKey::new(6), &[1.0, 10.0]).unwrap();
            assert!(r.ks < 0.02, "{r:?}");
            assert!((r.empirical_median / r.analytic_median - 1.0).abs() < 0.05);
            assert!(r.analytic_cdf[0].1 <= r.analytic_cdf[1].1);
        }
    }

    #[test]
    fn pareto_law_and_lp_norm() {
        let s = TailSequenceSpec::new(vec![1.0], XiLaw::Pareto { alpha: 2.0 }).unwrap();
        assert!((product_cdf(&s, 2.0).unwrap() - 0.75).abs() < 1e-15);
        let lp = sample_lp_norm(&s, 1.5, 2000, StreamKey::new(7));
        let sup = sample_sup(&s, 2000, StreamKey::new(7));
        for (a, b) in lp.iter().zip(&sup) {
            assert!((a - b).abs() < 1e-9 * b);
        }
    }
}
