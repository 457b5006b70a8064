//! Time-change clocks and first-passage samplers.
//!
//! For `f_b(s) = 1/(b-s)` the integral `Y(r) = ∫_a^r f_b dW` is a Brownian
//! motion run on the clock `h(r) = ∫_a^r f_b² = 1/(b-r) - 1/(b-a)`, which
//! explodes at `b`. The first time `Y` reaches a level `η` is therefore a.s.
//! before `b`, and `h(τ)` has the first-passage law of level `η`.
//!
//! Two backends are provided:
//!
//! * exact: draw the standard first-passage time `T = η²/Z²` and map it back
//!   through the inverse clock ([`sample_hitting`]);
//! * grid-coupled: run the left-endpoint sum for `Y` along an existing path
//!   and stop at the first grid crossing ([`hit_on_grid`]), optionally
//!   refining cells near the barrier with Brownian-bridge draws
//!   ([`hit_refined`]).

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::paths::{bridge_split, BrownianPath};
use crate::rng::StreamKey;

/// Lower constant `sqrt(2/(πe))` in the two-sided tail estimate for `h(τ)`.
pub fn sandwich_lower_constant() -> f64 {
    (2.0 / (PI * E)).sqrt()
}

/// Clock `h(r) = ∫_a^r f_b(s)² ds` on `[a, b)`; `b = ∞` means `f_b ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clock {
    a: f64,
    b: f64,
}

impl Clock {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || b.is_nan() || !(a < b) {
            return Err(Error::OutOfDomain {
                what: "clock interval end",
                value: b,
            });
        }
        Ok(Self { a, b })
    }

    pub fn infinite(a: f64) -> Result<Self> {
        Self::new(a, f64::INFINITY)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite()
    }

    /// `f_b(t)`
    pub fn weight(&self, t: f64) -> f64 {
        if self.is_finite() {
            1.0 / (self.b - t)
        } else {
            1.0
        }
    }

    pub fn clock(&self, r: f64) -> Result<f64> {
        if !(r >= self.a && r < self.b) {
            return Err(Error::OutOfDomain {
                what: "clock argument",
                value: r,
            });
        }
        Ok(self.h(r))
    }

    pub(crate) fn h(&self, r: f64) -> f64 {
        if self.is_finite() {
            1.0 / (self.b - r) - 1.0 / (self.b - self.a)
        } else {
            r - self.a
        }
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::OutOfDomain {
                what: "clock value",
                value: u,
            });
        }
        Ok(self.h_inv(u))
    }

    pub(crate) fn h_inv(&self, u: f64) -> f64 {
        if u == 0.0 {
            return self.a;
        }
        if self.is_finite() {
            let r = self.b - 1.0 / (u + 1.0 / (self.b - self.a));
            r.max(self.a)
        } else {
            self.a + u
        }
    }
}

/// A first-passage time with its clock value and level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingSample {
    pub tau: f64,
    pub clock_value: f64,
    pub level: f64,
}

/// The level `η`: a constant or an independent centred Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Level {
    Fixed(f64),
    Gaussian { sigma: f64 },
}

impl Level {
    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Level::Fixed(x) => x,
            Level::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

/// First passage of level `x` by a standard Brownian motion given the
/// standard normal draw `z`: `τ_x = x²/z²`.
pub fn first_passage_from_normal(x: f64, z: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x * x / (z * z)
}

pub fn sample_first_passage_exact<R: Rng>(x: f64, rng: &mut R) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    first_passage_from_normal(x, z)
}

/// `P(τ_x ≤ t) = erfc(|x|/sqrt(2t))`
pub fn levy_cdf(x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return 1.0;
    }
    erfc(x.abs() / (2.0 * t).sqrt())
}

/// Density `(2π)^{-1/2} s^{-3/2} |x| exp(-x²/(2s))` of `τ_x`.
pub fn levy_density(x: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    (2.0 * PI).powf(-0.5) * s.powf(-1.5) * x.abs() * (-x * x / (2.0 * s)).exp()
}

/// Exact backend: `h(τ)` is drawn as a standard first passage, `τ` is its
/// inverse clock image. `cap` rejects clock values beyond a configured bound
/// (relevant for `b = ∞`, where `τ` is unbounded).
pub fn sample_hitting<R: Rng>(
    clock: &Clock,
    level: Level,
    rng: &mut R,
    cap: Option<f64>,
) -> Result<HittingSample> {
    let eta = level.draw(rng);
    let t = sample_first_passage_exact(eta, rng);
    if let Some(cap) = cap {
        if t > cap {
            return Err(Error::CapExceeded {
                clock_value: t,
                cap,
            });
        }
    }
    let mut tau = clock.h_inv(t);
    if clock.is_finite() && tau >= clock.b {
        // Only reachable when 1/(u + c) underflows below the spacing of b.
        tau = f64::from_bits(clock.b.to_bits() - 1);
    }
    Ok(HittingSample {
        tau,
        clock_value: t,
        level: eta,
    })
}

/// Distribution of `η` for the two-sided tail estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LevelLaw {
    Point(f64),
    Gaussian { sigma: f64 },
}

impl LevelLaw {
    /// `E min(|η|/sqrt(t), 1)`
    pub fn expected_min(&self, t: f64) -> f64 {
        match *self {
            LevelLaw::Point(x) => (x.abs() / t.sqrt()).min(1.0),
            LevelLaw::Gaussian { sigma } => {
                let k = t.sqrt() / sigma;
                (2.0 / PI).sqrt() * (1.0 - (-0.5 * k * k).exp()) / k + erfc(k / 2f64.sqrt())
            }
        }
    }

    /// Exact `P(h(τ) > t) = E erf(|η|/sqrt(2t))`.
    pub fn exact_survival(&self, t: f64) -> f64 {
        match *self {
            LevelLaw::Point(x) => erf(x.abs() / (2.0 * t).sqrt()),
            LevelLaw::Gaussian { sigma } => arctan_survival(sigma, t),
        }
    }

    pub fn as_level(&self) -> Level {
        match *self {
            LevelLaw::Point(x) => Level::Fixed(x),
            LevelLaw::Gaussian { sigma } => Level::Gaussian { sigma },
        }
    }
}

/// `(2/π) arctan(σ/sqrt(t))`
pub fn arctan_survival(sigma: f64, t: f64) -> f64 {
    2.0 / PI * (sigma / t.sqrt()).atan()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailLaw {
    /// `h(τ)` for a Gaussian level with standard deviation `sigma`.
    Arctan { sigma: f64 },
    /// First passage of a fixed level `x` by a standard Brownian motion.
    Levy { x: f64 },
    /// Two-sided estimate for a general level law.
    Bounds(LevelLaw),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Survival {
    Exact(f64),
    Band { lower: f64, upper: f64 },
}

pub fn tail_survival(law: TailLaw, t: f64) -> Result<Survival> {
    if !(t > 0.0) {
        return Err(Error::OutOfDomain {
            what: "survival time",
            value: t,
        });
    }
    Ok(match law {
        TailLaw::Arctan { sigma } => Survival::Exact(arctan_survival(sigma, t)),
        TailLaw::Levy { x } => Survival::Exact(1.0 - levy_cdf(x, t)),
        TailLaw::Bounds(l) => {
            let upper = l.expected_min(t);
            Survival::Band {
                lower: sandwich_lower_constant() * upper,
                upper,
            }
        }
    })
}

/// The same band computed by Monte Carlo over samples of `η`.
pub fn band_from_level_samples(levels: &[f64], t: f64) -> Result<(f64, f64)> {
    if levels.is_empty() {
        return Err(Error::EmptyInput("level samples"));
    }
    let upper = levels
        .iter()
        .map(|x| (x.abs() / t.sqrt()).min(1.0))
        .sum::<f64>()
        / levels.len() as f64;
    Ok((sandwich_lower_constant() * upper, upper))
}

/// How a block's clock grid is laid out in clock (`h`) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ClockSpacing {
    /// `steps` equal clock steps on `[0, h_max]`.
    Uniform { steps: usize },
    /// `steps` equal clock steps on `[0, unit]`, then on each doubling
    /// segment `[unit 2^{k-1}, unit 2^k]` up to `h_max`.
    Doubling { steps_per_segment: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockGridSpec {
    /// Natural clock scale of the level, e.g. `η²` or `Var η`.
    pub unit: f64,
    /// `h_max = unit * cap_factor`; hits beyond it are unresolved.
    pub cap_factor: f64,
    pub spacing: ClockSpacing,
}

impl ClockGridSpec {
    pub fn doubling(unit: f64, cap_factor: f64, steps_per_segment: usize) -> Self {
        Self {
            unit,
            cap_factor,
            spacing: ClockSpacing::Doubling { steps_per_segment },
        }
    }

    pub fn h_max(&self) -> f64 {
        self.unit * self.cap_factor
    }

    pub fn clock_points(&self) -> Vec<f64> {
        let h_max = self.h_max();
        let mut us = Vec::new();
        match self.spacing {
            ClockSpacing::Uniform { steps } => {
                let steps = steps.max(1);
                us.extend((0..=steps).map(|j| h_max * j as f64 / steps as f64));
            }
            ClockSpacing::Doubling { steps_per_segment } => {
                let m = steps_per_segment.max(1);
                us.extend((0..m).map(|j| self.unit * j as f64 / m as f64));
                let mut lo = self.unit;
                while lo < h_max {
                    us.extend((0..m).map(|j| lo * (1.0 + j as f64 / m as f64)).filter(|u| *u < h_max));
                    lo *= 2.0;
                }
                us.push(h_max);
            }
        }
        us
    }

    /// Grid times on `[a, h^{-1}(h_max)]`, strictly increasing and `< b`.
    pub fn times(&self, clock: &Clock) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .clock_points()
            .into_iter()
            .map(|u| clock.h_inv(u))
            .filter(|t| *t < clock.b)
            .collect();
        ts.dedup();
        ts
    }
}

/// Outcome of grid-coupled hitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GridHit {
    Hit {
        sample: HittingSample,
        /// `Y(τ) - η` at the detected grid time.
        overshoot: f64,
        /// Grid index of `τ`.
        index: usize,
    },
    /// The running sum never crossed `η` before the grid's last time below
    /// `b`.
    Unresolved {
        terminal_y: f64,
        last_time: f64,
        last_index: usize,
        level: f64,
    },
}

impl GridHit {
    pub fn is_hit(&self) -> bool {
        matches!(self, GridHit::Hit { .. })
    }

    /// Grid index where the block integrand stops.
    pub fn stop_index(&self) -> usize {
        match *self {
            GridHit::Hit { index, .. } => index,
            GridHit::Unresolved { last_index, .. } => last_index,
        }
    }

    /// `Y` at the stopping index: `η + overshoot` for a hit.
    pub fn stopped_value(&self) -> f64 {
        match *self {
            GridHit::Hit { sample, overshoot, .. } => sample.level + overshoot,
            GridHit::Unresolved { terminal_y, .. } => terminal_y,
        }
    }
}

fn crossed(y: f64, eta: f64) -> bool {
    if eta > 0.0 {
        y >= eta
    } else {
        y <= eta
    }
}

/// Cells of `path` that the hitting search for `clock` may use: left endpoint
/// at or after `a`, right endpoint strictly before `b`.
fn search_range(path: &BrownianPath, clock: &Clock) -> Result<(usize, usize)> {
    let times = path.times();
    let start = path.grid().index_of(clock.a).ok_or_else(|| {
        Error::InvalidGrid(format!("clock start {} is not a grid point", clock.a))
    })?;
    let mut end = start;
    while end < path.n_cells() && times[end + 1] < clock.b {
        end += 1;
    }
    Ok((start, end))
}

/// First grid crossing of `η` by `Y(t_k) = Σ_{j<k} f_b(t_j) ΔW_j`.
pub fn hit_on_grid(path: &BrownianPath, clock: &Clock, eta: f64) -> Result<GridHit> {
    hit_on_grid_observed(path, clock, eta, 1)
}

/// As [`hit_on_grid`], but crossings are only checked at every `stride`-th
/// grid time after `a`. Smaller strides observe the same running sum at a
/// superset of times.
pub fn hit_on_grid_observed(
    path: &BrownianPath,
    clock: &Clock,
    eta: f64,
    stride: usize,
) -> Result<GridHit> {
    let stride = stride.max(1);
    let (start, end) = search_range(path, clock)?;
    let times = path.times();
    if eta == 0.0 {
        return Ok(GridHit::Hit {
            sample: HittingSample {
                tau: clock.a,
                clock_value: 0.0,
                level: 0.0,
            },
            overshoot: 0.0,
            index: start,
        });
    }
    let incs = path.increments();
    let mut y = 0.0;
    let mut last_obs = (start, 0.0);
    for k in start..end {
        y += clock.weight(times[k]) * incs[k];
        if (k + 1 - start) % stride != 0 {
            continue;
        }
        last_obs = (k + 1, y);
        if crossed(y, eta) {
            let tau = times[k + 1];
            return Ok(GridHit::Hit {
                sample: HittingSample {
                    tau,
                    clock_value: clock.h(tau),
                    level: eta,
                },
                overshoot: y - eta,
                index: k + 1,
            });
        }
    }
    Ok(GridHit::Unresolved {
        terminal_y: last_obs.1,
        last_time: times[last_obs.0],
        last_index: last_obs.0,
        level: eta,
    })
}

/// Barrier-band refinement for grid-coupled hitting.
///
/// A cell `[t0, t1)` is split at its clock midpoint when, at `t0`, the
/// distance `|η - Y(t0)|` is below `band` standard deviations of the cell's
/// increment of `Y`. The decision only uses information at `t0` and the new
/// point is drawn from the Brownian bridge, so the refined grid consists of
/// stopping times and the path keeps its exact law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinePolicy {
    pub band: f64,
    pub max_depth: u32,
    /// Cells whose clock variance is below this are not split further.
    pub min_clock_step: f64,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        Self {
            band: 6.0,
            max_depth: 64,
            min_clock_step: 1e-10,
        }
    }
}

/// Grid-coupled hitting with barrier refinement. Returns the refined path
/// (unchanged outside the hitting search range) and the outcome on it.
pub fn hit_refined(
    path: &BrownianPath,
    clock: &Clock,
    eta: f64,
    policy: &RefinePolicy,
    key: StreamKey,
) -> Result<(BrownianPath, GridHit)> {
    let (start, end) = search_range(path, clock)?;
    if eta == 0.0 || start == end {
        let outcome = hit_on_grid(path, clock, eta)?;
        return Ok((path.clone(), outcome));
    }
    let mut rng = key.rng();
    let times = path.times();
    let incs = path.increments();
    let mut out_t = vec![times[start]];
    let mut out_dw = Vec::with_capacity(end - start);
    let mut y = 0.0;
    let mut hit: Option<(usize, f64)> = None;
    let mut stack: Vec<(f64, f64, f64, u32)> = Vec::new();
    for k in start..end {
        if hit.is_some() {
            out_t.push(times[k + 1]);
            out_dw.push(incs[k]);
            continue;
        }
        stack.push((times[k], times[k + 1], incs[k], 0));
        while let Some((t0, t1, dw, depth)) = stack.pop() {
            if hit.is_none() {
                let f0 = clock.weight(t0);
                let var = f0 * f0 * (t1 - t0);
                if depth < policy.max_depth
                    && var > policy.min_clock_step
                    && (eta - y).abs() < policy.band * var.sqrt()
                {
                    let tm = clock.h_inv(0.5 * (clock.h(t0) + clock.h(t1)));
                    if tm > t0 && tm < t1 {
                        let (l, r) = bridge_split(t0, tm, t1, dw, &mut rng);
                        stack.push((tm, t1, r, depth + 1));
                        stack.push((t0, tm, l, depth + 1));
                        continue;
                    }
                }
                y += f0 * dw;
                out_t.push(t1);
                out_dw.push(dw);
                if crossed(y, eta) {
                    hit = Some((start + out_dw.len(), y));
                }
            } else {
                out_t.push(t1);
                out_dw.push(dw);
            }
        }
    }
    let refined = path.splice(start..end, &out_t, &out_dw);
    let outcome = match hit {
        Some((index, y)) => {
            let tau = refined.times()[index];
            GridHit::Hit {
                sample: HittingSample {
                    tau,
                    clock_value: clock.h(tau),
                    level: eta,
                },
                overshoot: y - eta,
                index,
            }
        }
        None => {
            let last_index = start + out_dw.len();
            GridHit::Unresolved {
                terminal_y: y,
                last_time: refined.times()[last_index],
                last_index,
                level: eta,
            }
        }
    };
    Ok((refined, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::paths::sample_path;
    use crate::quad;
    use crate::stats::{ks_statistic, sorted, McEstimate};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn clock_examples() {
        let c = Clock::new(0.0, 1.0).unwrap();
        assert!((c.clock(0.5).unwrap() - 1.0).abs() < 1e-15);
        let c2 = Clock::new(0.0, 2.0).unwrap();
        assert!((c2.clock(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c.clock(0.0).unwrap(), 0.0);
        assert!(c.clock(1.0).is_err());
        assert!(c.clock(-0.1).is_err());
        let inf = Clock::infinite(2.0).unwrap();
        assert_eq!(inf.clock(5.0).unwrap(), 3.0);
        assert_eq!(inf.weight(7.0), 1.0);
        assert!(Clock::new(1.0, 1.0).is_err());
    }

    #[test]
    fn clock_inverse_examples() {
        let c = Clock::new(0.0, 1.0).unwrap();
        assert!((c.inverse(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c.inverse(0.0).unwrap(), 0.0);
        assert!(c.inverse(-1.0).is_err());
        for i in 1..=100 {
            let u = 0.1 * i as f64;
            let back = c.clock(c.inverse(u).unwrap()).unwrap();
            assert!((back - u).abs() < 1e-12 * u.max(1.0), "{u} {back}");
        }
    }

    #[test]
    fn first_passage_examples() {
        assert_eq!(first_passage_from_normal(1.0, 2.0), 0.25);
        let mut rng = StreamKey::new(1).rng();
        assert_eq!(sample_first_passage_exact(0.0, &mut rng), 0.0);
        // P(τ_1 > 1) = P(|Z| < 1)
        let oracle = 2.0 * Normal::standard().cdf(1.0) - 1.0;
        assert!((oracle - 0.6827).abs() < 1e-4);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_first_passage_exact(1.0, &mut rng))
            .collect();
        let p = McEstimate::proportion(&xs, |t| *t > 1.0);
        assert!(p.within(oracle, 3.0), "{p:?}");
    }

    #[test]
    fn levy_cdf_matches_integrated_density() {
        for &t in &[0.1, 0.5, 1.0, 4.0, 30.0] {
            let integrated = quad::integrate(|s| levy_density(1.0, s), 0.0, t, 1e-12);
            assert!((integrated - levy_cdf(1.0, t)).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn exact_sampler_ks_and_scale_equivariance() {
        let key = StreamKey::new(2);
        let mut r1 = key.rng();
        let mut r2 = key.rng();
        let ones: Vec<f64> = (0..100_000)
            .map(|_| sample_first_passage_exact(1.0, &mut r1))
            .collect();
        let threes: Vec<f64> = (0..100_000)
            .map(|_| sample_first_passage_exact(3.0, &mut r2))
            .collect();
        for (a, b) in ones.iter().zip(&threes).take(1000) {
            assert!((9.0 * a - b).abs() <= 1e-12 * b);
        }
        let d = ks_statistic(&sorted(&ones), |t| levy_cdf(1.0, t)).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn sample_hitting_examples() {
        let c = Clock::new(0.0, 1.0).unwrap();
        let mut rng = StreamKey::new(3).rng();
        let s = sample_hitting(&c, Level::Fixed(0.0), &mut rng, None).unwrap();
        assert_eq!(s.tau, 0.0);
        assert_eq!(s.clock_value, 0.0);
        let gs: Vec<HittingSample> = (0..100_000)
            .map(|_| sample_hitting(&c, Level::Gaussian { sigma: 1.0 }, &mut rng, None).unwrap())
            .collect();
        assert!(gs.iter().all(|s| s.tau >= 0.0 && s.tau < 1.0));
        let p = McEstimate::proportion(&gs, |s| s.clock_value > 1.0);
        assert!(p.within(0.5, 3.0), "{p:?}");
        let fixed: Vec<HittingSample> = (0..100_000)
            .map(|_| sample_hitting(&c, Level::Fixed(1.0), &mut rng, None).unwrap())
            .collect();
        let p4 = McEstimate::proportion(&fixed, |s| s.clock_value > 4.0).mean;
        assert!((0.242..=0.5).contains(&p4), "{p4}");
        let inf = Clock::infinite(0.0).unwrap();
        let capped = (0..1000)
            .map(|_| sample_hitting(&inf, Level::Fixed(1.0), &mut rng, Some(10.0)))
            .filter(|r| matches!(r, Err(Error::CapExceeded { .. })))
            .count();
        assert!(capped > 100);
    }

    #[test]
    fn tail_survival_examples() {
        match tail_survival(TailLaw::Arctan { sigma: 1.0 }, 1.0).unwrap() {
            Survival::Exact(p) => assert!((p - 0.5).abs() < 1e-15),
            _ => unreachable!(),
        }
        let mut prev = 1.0;
        for k in 0..40 {
            let t = 2f64.powi(k);
            let Survival::Exact(p) = tail_survival(TailLaw::Arctan { sigma: 1.0 }, t).unwrap() else {
                unreachable!()
            };
            assert!(p < prev);
            prev = p;
        }
        assert!(prev < 1e-5);
        let Survival::Band { lower, upper } =
            tail_survival(TailLaw::Bounds(LevelLaw::Point(1.0)), 4.0).unwrap()
        else {
            unreachable!()
        };
        assert!((lower - 0.2420).abs() < 1e-3, "{lower}");
        assert_eq!(upper, 0.5);
        assert!(tail_survival(TailLaw::Levy { x: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn gaussian_expected_min_matches_monte_carlo() {
        let mut rng = StreamKey::new(4).rng();
        let law = LevelLaw::Gaussian { sigma: 2.0 };
        let levels: Vec<f64> = (0..200_000).map(|_| law.as_level().draw(&mut rng)).collect();
        for &t in &[0.25, 1.0, 4.0, 16.0] {
            let (_, mc) = band_from_level_samples(&levels, t).unwrap();
            assert!((mc - law.expected_min(t)).abs() < 0.005, "t={t}");
        }
    }

    #[test]
    fn exact_survival_inside_band() {
        for law in [
            LevelLaw::Point(1.0),
            LevelLaw::Gaussian { sigma: 0.5 },
            LevelLaw::Gaussian { sigma: 2.0 },
        ] {
            for k in -6..10 {
                let t = 2f64.powi(k);
                let s = law.exact_survival(t);
                let up = law.expected_min(t);
                assert!(s <= up + 1e-12 && s >= sandwich_lower_constant() * up - 1e-12);
            }
        }
    }

    #[test]
    fn clock_grid_layout() {
        let c = Clock::new(0.0, 1.0).unwrap();
        let spec = ClockGridSpec::doubling(1.0, 1024.0, 8);
        let ts = spec.times(&c);
        assert_eq!(ts[0], 0.0);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert!(*ts.last().unwrap() < 1.0);
        assert!((c.h(*ts.last().unwrap()) - 1024.0).abs() < 1e-6);
        assert_eq!(ts.len(), 8 + 10 * 8 + 1);
        let uni = ClockGridSpec {
            unit: 1.0,
            cap_factor: 10.0,
            spacing: ClockSpacing::Uniform { steps: 10 },
        };
        let us = uni.clock_points();
        assert_eq!(us.len(), 11);
        assert!((us[3] - 3.0).abs() < 1e-12);
    }

    fn clock_path(steps: usize, seed: u64) -> (BrownianPath, Clock) {
        let c = Clock::new(0.0, 1.0).unwrap();
        let mut ts = ClockGridSpec::doubling(1.0, 4096.0, steps).times(&c);
        ts.push(1.0);
        let g = TimeGrid::from_times(ts, 1.0).unwrap();
        (sample_path(&g, StreamKey::new(seed)), c)
    }

    #[test]
    fn grid_hit_zero_level_and_bounds() {
        let (p, c) = clock_path(16, 5);
        let h = hit_on_grid(&p, &c, 0.0).unwrap();
        assert_eq!(h.stop_index(), 0);
        match h {
            GridHit::Hit { sample, .. } => assert_eq!(sample.tau, 0.0),
            _ => unreachable!(),
        }
        if let GridHit::Hit { sample, overshoot, .. } = hit_on_grid(&p, &c, 0.7).unwrap() {
            assert!(sample.tau < 1.0 && overshoot >= 0.0);
        }
        let off = Clock::new(0.3, 1.0).unwrap();
        assert!(hit_on_grid(&p, &off, 1.0).is_err());
    }

    #[test]
    fn observing_more_times_never_delays_the_hit() {
        let c = Clock::new(0.0, 1.0).unwrap();
        for seed in 0..200 {
            let (p, _) = clock_path(32, 100 + seed);
            let taus: Vec<f64> = [8, 4, 2, 1]
                .iter()
                .map(|s| match hit_on_grid_observed(&p, &c, 1.0, *s).unwrap() {
                    GridHit::Hit { sample, .. } => sample.tau,
                    GridHit::Unresolved { .. } => f64::INFINITY,
                })
                .collect();
            assert!(taus.windows(2).all(|w| w[1] <= w[0]), "{taus:?}");
        }
    }

    #[test]
    fn grid_law_approaches_exact_law() {
        let mut ds = Vec::new();
        for &m in &[4usize, 16, 64] {
            let clocks: Vec<f64> = (0..4000)
                .map(|i| {
                    let (p, c) = clock_path(m, 10_000 + i);
                    match hit_on_grid(&p, &c, 1.0).unwrap() {
                        GridHit::Hit { sample, .. } => sample.clock_value,
                        GridHit::Unresolved { .. } => f64::INFINITY,
                    }
                })
                .collect();
            ds.push(ks_statistic(&sorted(&clocks), |t| levy_cdf(1.0, t)).unwrap());
        }
        assert!(ds[0] > ds[1] && ds[1] > ds[2], "{ds:?}");
    }

    #[test]
    fn refined_hit_has_tiny_overshoot_and_keeps_path_law() {
        let policy = RefinePolicy::default();
        let mut over = Vec::new();
        let mut clocks = Vec::new();
        for i in 0..3000 {
            let (p, c) = clock_path(16, 50_000 + i);
            let (r, h) = hit_refined(&p, &c, 1.0, &policy, StreamKey::new(i)).unwrap();
            assert!((r.values().last().unwrap() - p.values().last().unwrap()).abs() < 1e-9);
            if let GridHit::Hit { overshoot, index, sample } = h {
                over.push(overshoot);
                clocks.push(sample.clock_value);
                // The stopped running sum equals level + overshoot.
                let stopped: f64 = (0..index)
                    .map(|k| c.weight(r.times()[k]) * r.increments()[k])
                    .sum();
                assert!((stopped - 1.0 - overshoot).abs() < 1e-9);
            } else {
                clocks.push(f64::INFINITY);
            }
        }
        let mean_over = over.iter().sum::<f64>() / over.len() as f64;
        assert!(mean_over < 1e-3, "{mean_over}");
        let d = ks_statistic(&sorted(&clocks), |t| levy_cdf(1.0, t)).unwrap();
        assert!(d < 0.03, "{d}");
    }
}
