//! A weakly integrable process that is not strongly integrable.
//!
//! Each block on `I_n = (s_n, b_n)` with centre `a_n` is
//! `φ_n = -1 on [s_n, a_n)`, `1/(b_n - t) on [a_n, τ_n)`, where `τ_n` is the
//! first time `∫_{a_n} (b_n - s)^{-1} dW` reaches `η_n = W(a_n) - W(s_n)`.
//! Every block integrates to zero, while its `L²` norm is
//! `(a_n - s_n)(1 + θ_n)` with `θ_n = h_n(τ_n)/(a_n - s_n)` heavy-tailed.
//! Placing block `n` on basis direction `e_n` with weight
//! `c_n (a_n - s_n)^{-1/2}` gives a process whose scalar integrals vanish
//! while `Σ c_n² ξ_n²`, `ξ_n = (1+θ_n)^{1/2}`, diverges for `c_n = 1/n`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hitting::{hit_on_grid, hit_refined, Clock, ClockGridSpec, GridHit, RefinePolicy};
use crate::paths::{BrownianPath, VectorPathValue};
use crate::quad;
use crate::rng::StreamKey;
use crate::stats::McEstimate;

/// Largest block count for the dyadic layout; beyond it interval lengths
/// approach the double-precision floor.
pub const MAX_DYADIC_BLOCKS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSchedule {
    intervals: Vec<(f64, f64)>,
    c: Vec<f64>,
}

impl BlockSchedule {
    pub fn new(intervals: Vec<(f64, f64)>, c: Vec<f64>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::EmptyInput("block intervals"));
        }
        if intervals.len() != c.len() {
            return Err(Error::LengthMismatch {
                expected: intervals.len(),
                found: c.len(),
            });
        }
        let mut prev = 0.0;
        for &(s, b) in &intervals {
            if !(s >= prev && s < b && b <= 1.0) || 0.5 * (s + b) <= s {
                return Err(Error::InvalidGrid(format!(
                    "block ({s}, {b}) is empty, unordered or outside (0, 1)"
                )));
            }
            prev = b;
        }
        if let Some(bad) = c.iter().find(|c| !(**c >= 0.0 && **c <= 1.0)) {
            return Err(Error::OutOfDomain {
                what: "coefficient c_n",
                value: *bad,
            });
        }
        Ok(Self { intervals, c })
    }

    /// `|I_n| = spacing 2^{-n-1}`, packed left to right from 0.
    pub fn dyadic(n: usize, spacing: f64, c: Vec<f64>) -> Result<Self> {
        if n > MAX_DYADIC_BLOCKS {
            return Err(Error::Unsupported(format!(
                "dyadic layout supports at most {MAX_DYADIC_BLOCKS} blocks, got {n}"
            )));
        }
        if !(spacing > 0.0 && spacing <= 1.0) {
            return Err(Error::OutOfDomain {
                what: "spacing factor",
                value: spacing,
            });
        }
        let mut s = 0.0;
        let mut iv = Vec::with_capacity(n);
        for k in 1..=n {
            let b = s + spacing * 0.5f64.powi(k as i32 + 1);
            iv.push((s, b));
            s = b;
        }
        Self::new(iv, c)
    }

    /// `I_n = ((n-1)/N, n/N)`.
    pub fn uniform(n: usize, c: Vec<f64>) -> Result<Self> {
        let iv = (0..n)
            .map(|k| (k as f64 / n as f64, (k + 1) as f64 / n as f64))
            .collect();
        Self::new(iv, c)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn interval(&self, n: usize) -> (f64, f64) {
        self.intervals[n]
    }

    pub fn center(&self, n: usize) -> f64 {
        let (s, b) = self.intervals[n];
        0.5 * (s + b)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }
}

/// `c_n = 1/n`
pub fn harmonic_coefficients(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 1.0 / k as f64).collect()
}

/// `c_n = 2^{-n}`; entries below the double range are zero.
pub fn geometric_coefficients(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 0.5f64.powi(k as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockIntegrand {
    /// One-based block index.
    pub n: usize,
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eta: f64,
    /// Stopping time of the block; the grid's last time before `b` when the
    /// hit is unresolved.
    pub tau: f64,
    pub clock_value: f64,
    pub theta: f64,
    pub xi: f64,
    /// `Y(τ_n) - η_n`; zero for the exact backend.
    pub overshoot: f64,
    pub resolved: bool,
}

impl BlockIntegrand {
    fn new(n: usize, (s, b): (f64, f64), c: f64, eta: f64, tau: f64, clock_value: f64) -> Self {
        let a = 0.5 * (s + b);
        let theta = clock_value / (a - s);
        Self {
            n,
            s,
            a,
            b,
            c,
            eta,
            tau,
            clock_value,
            theta,
            xi: (1.0 + theta).sqrt(),
            overshoot: 0.0,
            resolved: true,
        }
    }

    /// Weight `c_n (a_n - s_n)^{-1/2}` of the block on `e_n`.
    pub fn scale(&self) -> f64 {
        self.c / (self.a - self.s).sqrt()
    }

    /// `‖φ_n‖²_{L²} = (a_n - s_n)(1 + θ_n)`
    pub fn norm_sq(&self) -> f64 {
        (self.a - self.s) * (1.0 + self.theta)
    }

    /// `φ_n(t)`
    pub fn value(&self, t: f64) -> f64 {
        if t >= self.s && t < self.a {
            -1.0
        } else if t >= self.a && t < self.tau {
            1.0 / (self.b - t)
        } else {
            0.0
        }
    }

    /// `θ_n`, or `+∞` when the hit fell beyond the grid cap.
    pub fn theta_or_censored(&self) -> f64 {
        if self.resolved {
            self.theta
        } else {
            f64::INFINITY
        }
    }
}

/// Exact backend: `θ_n = Z_1²/Z_2²` from the distributional hitting law.
pub fn sample_blocks_exact(schedule: &BlockSchedule, key: StreamKey) -> Vec<BlockIntegrand> {
    let mut rng = key.rng();
    (0..schedule.len())
        .map(|k| {
            let (s, b) = schedule.interval(k);
            let a = 0.5 * (s + b);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let eta = (a - s).sqrt() * z1;
            let h = eta * eta / (z2 * z2);
            let clock = Clock::new(a, b).expect("schedule intervals are nonempty");
            let tau = clock.h_inv(h).min(f64::from_bits(b.to_bits() - 1));
            BlockIntegrand::new(k + 1, (s, b), schedule.c[k], eta, tau, h)
        })
        .collect()
}

/// Grid layout for the grid-coupled backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridResolution {
    pub steps_per_segment: usize,
    /// Clock cap in units of `a_n - s_n`, i.e. a cap on `θ_n`.
    pub cap_factor: f64,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self {
            steps_per_segment: 16,
            cap_factor: 4_194_304.0,
        }
    }
}

/// Grid containing every `s_n`, a clock-doubling grid on `[a_n, b_n)` and
/// every `b_n`, on `[0, 1]`.
pub fn process_grid(schedule: &BlockSchedule, res: GridResolution, blocks: usize) -> Result<TimeGrid> {
    let mut ts = vec![0.0];
    for k in 0..blocks.min(schedule.len()) {
        let (s, b) = schedule.interval(k);
        let a = schedule.center(k);
        ts.push(s);
        let clock = Clock::new(a, b)?;
        ts.extend(ClockGridSpec::doubling(a - s, res.cap_factor, res.steps_per_segment).times(&clock));
        ts.push(b);
    }
    ts.push(1.0);
    TimeGrid::from_points(ts, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessOutput {
    pub blocks: Vec<BlockIntegrand>,
    /// The driving path after any barrier refinement.
    pub path: BrownianPath,
}

impl ProcessOutput {
    pub fn flagged(&self) -> usize {
        self.blocks.iter().filter(|b| !b.resolved).count()
    }
}

/// Grid backend on the first `d` blocks. With `refine`, cells near each
/// barrier are split (bridge draws from `key`); otherwise plain first grid
/// crossing.
pub fn build_process(
    schedule: &BlockSchedule,
    path: &BrownianPath,
    d: usize,
    refine: Option<&RefinePolicy>,
    key: StreamKey,
) -> Result<ProcessOutput> {
    if d > schedule.len() {
        return Err(Error::DimensionMismatch {
            expected: schedule.len(),
            found: d,
        });
    }
    let mut path = path.clone();
    let mut blocks = Vec::with_capacity(d);
    for k in 0..d {
        let (s, b) = schedule.interval(k);
        let a = schedule.center(k);
        let eta = path.value_at(a)? - path.value_at(s)?;
        let clock = Clock::new(a, b)?;
        let outcome = match refine {
            Some(policy) => {
                let (p, o) = hit_refined(&path, &clock, eta, policy, key.fork(k as u64))?;
                path = p;
                o
            }
            None => hit_on_grid(&path, &clock, eta)?,
        };
        let block = match outcome {
            GridHit::Hit {
                sample, overshoot, ..
            } => BlockIntegrand {
                overshoot,
                ..BlockIntegrand::new(k + 1, (s, b), schedule.c[k], eta, sample.tau, sample.clock_value)
            },
            GridHit::Unresolved { last_time, .. } => BlockIntegrand {
                resolved: false,
                overshoot: f64::NAN,
                ..BlockIntegrand::new(k + 1, (s, b), schedule.c[k], eta, last_time, clock.h(last_time))
            },
        };
        blocks.push(block);
    }
    Ok(ProcessOutput { blocks, path })
}

/// `∫ φ_n dW` as a left-endpoint sum on the path.
pub fn block_weak_integral(block: &BlockIntegrand, path: &BrownianPath) -> f64 {
    let times = path.times();
    let incs = path.increments();
    let lo = path.grid().floor_index(block.s);
    let hi = path.grid().floor_index(block.tau).min(path.n_cells());
    (lo..hi).map(|k| block.value(times[k]) * incs[k]).sum()
}

/// `∫ ⟨φ, x⟩ dW`
pub fn weak_integral(blocks: &[BlockIntegrand], path: &BrownianPath, x: &[f64]) -> Result<f64> {
    if x.len() != blocks.len() {
        return Err(Error::DimensionMismatch {
            expected: blocks.len(),
            found: x.len(),
        });
    }
    Ok(blocks
        .iter()
        .zip(x)
        .filter(|(_, x)| **x != 0.0)
        .map(|(b, x)| x * b.scale() * block_weak_integral(b, path))
        .sum())
}

/// `‖⟨φ, x⟩‖_{L²(0,1)} = (Σ x_n² c_n² ξ_n²)^{1/2}`
pub fn weak_l2_norm(blocks: &[BlockIntegrand], x: &[f64]) -> Result<f64> {
    if x.len() != blocks.len() {
        return Err(Error::DimensionMismatch {
            expected: blocks.len(),
            found: x.len(),
        });
    }
    Ok(blocks
        .iter()
        .zip(x)
        .map(|(b, x)| (x * b.c * b.xi).powi(2))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongNorm {
    /// `Σ c_n² ξ_n²`
    pub value: f64,
    /// `(sup_n c_n ξ_n)²`, a lower bound for `value`.
    pub sup_sq: f64,
}

pub fn strong_l2_norm_sq(blocks: &[BlockIntegrand]) -> StrongNorm {
    let mut value = 0.0;
    let mut sup: f64 = 0.0;
    for b in blocks {
        let t = b.c * b.xi;
        value += t * t;
        sup = sup.max(t);
    }
    StrongNorm {
        value,
        sup_sq: sup * sup,
    }
}

/// `Φ(t_k) = Σ_n c_n (a_n - s_n)^{-1/2} φ_n(t_k) e_n` on every cell.
pub fn vector_integrand(blocks: &[BlockIntegrand], path: &BrownianPath) -> Vec<VectorPathValue> {
    let d = blocks.len();
    path.times()[..path.n_cells()]
        .iter()
        .map(|&t| {
            let mut v = VectorPathValue::zeros(d);
            for (i, b) in blocks.iter().enumerate() {
                v.0[i] = b.scale() * b.value(t);
            }
            v
        })
        .collect()
}

/// `E ξ^p = (2/π) ∫_0^{π/2} sin(u)^{-p} du` by quadrature (`ξ = sec Θ`
/// with `Θ` uniform on `(0, π/2)`, written around the singular end).
pub fn xi_moment(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InfiniteMoment);
    }
    // Subtract u^{-p}, integrated in closed form, to tame the endpoint.
    let smooth = quad::integrate(|u| u.sin().powf(-p) - u.powf(-p), 0.0, PI / 2.0, 1e-12);
    Ok(2.0 / PI * (smooth + (PI / 2.0).powf(1.0 - p) / (1.0 - p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentBoundCheck {
    pub p: f64,
    /// `E ‖⟨φ, x⟩‖^p_{L²}`
    pub lhs: McEstimate,
    /// `C_p ‖x‖^p ‖c‖^p_{ℓ^{pr}}` with `p/2 + 1/r = 1`.
    pub rhs: f64,
    pub c_p: f64,
    pub pass: bool,
}

/// `ℓ^q` norm
fn lq(v: &[f64], q: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Checks `E ‖⟨φ, x⟩‖^p ≤ C_p ‖x‖^p ‖c‖^p_{ℓ^{pr}}` over an ensemble of
/// block lists. `strict` restricts `p` to `(2/3, 1)`.
pub fn weak_moment_bound_check(
    ensemble: &[Vec<BlockIntegrand>],
    p: f64,
    x: &[f64],
    strict: bool,
) -> Result<MomentBoundCheck> {
    if strict && !(p > 2.0 / 3.0 && p < 1.0) {
        return Err(Error::OutOfDomain {
            what: "moment exponent (strict range is (2/3, 1))",
            value: p,
        });
    }
    if ensemble.is_empty() {
        return Err(Error::EmptyInput("block ensemble"));
    }
    let c_p = xi_moment(p)?;
    let samples = ensemble
        .iter()
        .map(|blocks| weak_l2_norm(blocks, x).map(|v| v.powf(p)))
        .collect::<Result<Vec<_>>>()?;
    let lhs = McEstimate::from_samples(&samples);
    let c: Vec<f64> = ensemble[0].iter().map(|b| b.c).collect();
    let pr = 2.0 * p / (2.0 - p);
    let rhs = c_p * lq(x, 2.0).powf(p) * lq(&c, pr).powf(p);
    Ok(MomentBoundCheck {
        p,
        lhs,
        rhs,
        c_p,
        pass: lhs.mean - 3.0 * lhs.stderr <= rhs,
    })
}
