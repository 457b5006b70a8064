//! Representing a terminal value as a stochastic integral.
//!
//! Given a target `ξ` measurable with respect to the path before `b`,
//! approximants `ξ_n` (the target evaluated on the path frozen at `a_n`, with
//! `a_n ↑ b`) are chained by hitting-time blocks: on `[a_n, a_{n+1})` the
//! integrand `(ξ_n - ξ_{n-1}) (a_{n+1} - t)^{-1}` runs until
//! `∫_{a_n} (a_{n+1} - s)^{-1} dW` first reaches 1. Each block then
//! integrates to `ξ_n - ξ_{n-1}` and the blocks telescope to `ξ_N`.

mod psi;
mod transfer;
mod universal;

pub use psi::{psi_zero_sum, PsiOutcome};
pub use transfer::{
    calibrate_transfer_constant, eta_budget_bound, lp_identity_lhs, lp_identity_rhs,
    transfer_check, TransferCheck,
};
pub use universal::{from_unit_ball, to_unit_ball, universal_walk, WalkTrajectory};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hitting::{hit_on_grid, hit_refined, Clock, ClockGridSpec, GridHit, RefinePolicy};
use crate::paths::{sample_path, vector_ito_sum, BrownianPath, VectorPathValue};
use crate::rng::{map_paths, StreamKey};
use crate::stats::McEstimate;

/// A random variable read off the driving path before its horizon.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TargetFunctional {
    Constant { value: Vec<f64> },
    /// `scale · W(t)`
    Value { t: f64, scale: f64 },
    /// `sign W(t)`, with `sign 0 = 0`.
    Sign { t: f64 },
}

impl TargetFunctional {
    pub fn dim(&self) -> usize {
        match self {
            TargetFunctional::Constant { value } => value.len(),
            _ => 1,
        }
    }

    /// Latest time the target reads; `-∞` for constants.
    pub fn horizon(&self) -> f64 {
        match *self {
            TargetFunctional::Constant { .. } => f64::NEG_INFINITY,
            TargetFunctional::Value { t, .. } | TargetFunctional::Sign { t } => t,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TargetFunctional::Constant { .. })
    }

    /// Evaluate on the path stopped at `freeze`. The grid must contain
    /// `min(horizon, freeze)`.
    pub fn eval(&self, path: &BrownianPath, freeze: f64) -> Result<VectorPathValue> {
        Ok(match self {
            TargetFunctional::Constant { value } => VectorPathValue(value.clone()),
            TargetFunctional::Value { t, scale } => {
                VectorPathValue(vec![scale * path.value_at(t.min(freeze))?])
            }
            TargetFunctional::Sign { t } => {
                let w = path.value_at(t.min(freeze))?;
                VectorPathValue(vec![if w > 0.0 {
                    1.0
                } else if w < 0.0 {
                    -1.0
                } else {
                    0.0
                }])
            }
        })
    }

    fn read_times(&self) -> Vec<f64> {
        match *self {
            TargetFunctional::Constant { .. } => Vec::new(),
            TargetFunctional::Value { t, .. } | TargetFunctional::Sign { t } => vec![t],
        }
    }
}

fn sub(x: &VectorPathValue, y: &VectorPathValue) -> VectorPathValue {
    VectorPathValue(x.0.iter().zip(&y.0).map(|(a, b)| a - b).collect())
}

/// Error metric used for the per-level budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BudgetMetric {
    /// `E min(‖ξ - ξ_n‖, 1)`
    L0,
    /// `E ‖ξ - ξ_n‖^p`
    Lp(f64),
}

impl BudgetMetric {
    pub fn distance(&self, d: f64) -> f64 {
        match *self {
            BudgetMetric::L0 => d.min(1.0),
            BudgetMetric::Lp(p) => d.powf(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DudleyPlan {
    pub target: TargetFunctional,
    pub a: f64,
    pub b: f64,
    /// `a_1 < ... < a_{N+1}`; level `n` lives on `[a_n, a_{n+1})`.
    pub schedule: Vec<f64>,
    pub budgets: Vec<f64>,
    pub measured: Vec<f64>,
    pub metric: BudgetMetric,
}

/// `a_n = b - (b - a) 2^{-n}`, `n = 1..=levels+1`.
pub fn default_schedule(a: f64, b: f64, levels: usize) -> Vec<f64> {
    (1..=levels + 1)
        .map(|n| b - (b - a) * 0.5f64.powi(n as i32))
        .collect()
}

/// Monte Carlo paths used to measure the approximation errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub paths: usize,
    pub key: StreamKey,
}

impl DudleyPlan {
    pub fn levels(&self) -> usize {
        self.schedule.len() - 1
    }

    /// Grid for assembly: `origin`, the target's read times, the schedule
    /// with a clock-doubling grid (unit 1, the hitting level) on every
    /// level, and `b` when finite.
    pub fn grid(&self, origin: f64, steps_per_segment: usize, cap_factor: f64) -> Result<TimeGrid> {
        let mut ts = vec![origin, self.a];
        ts.extend(self.target.read_times());
        for w in self.schedule.windows(2) {
            let clock = Clock::new(w[0], w[1])?;
            ts.extend(ClockGridSpec::doubling(1.0, cap_factor, steps_per_segment).times(&clock));
        }
        ts.push(*self.schedule.last().unwrap());
        if self.b.is_finite() {
            ts.push(self.b);
        }
        let end = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        TimeGrid::from_points(ts, end)
    }

    fn calibration_grid(&self, origin: f64) -> Result<TimeGrid> {
        let mut ts = vec![origin, self.a];
        ts.extend(self.target.read_times());
        ts.extend(self.schedule.iter().cloned());
        let end = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        TimeGrid::from_points(ts, end)
    }

    /// Re-plan with the `L^p` budget `E‖ξ - ξ_n‖^p < 4^{-n}`.
    pub fn lp_budget(&self, p: f64, calibration: Calibration) -> Result<DudleyPlan> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::OutOfDomain {
                what: "L^p exponent",
                value: p,
            });
        }
        plan_with(
            self.target.clone(),
            self.a,
            self.b,
            self.schedule.clone(),
            BudgetMetric::Lp(p),
            calibration,
        )
    }
}

/// Build a plan, measuring each level's approximation error by Monte Carlo.
pub fn plan(
    target: TargetFunctional,
    a: f64,
    b: f64,
    levels: usize,
    schedule: Option<Vec<f64>>,
    calibration: Calibration,
) -> Result<DudleyPlan> {
    if levels == 0 {
        return Err(Error::EmptyInput("levels"));
    }
    let schedule = schedule.unwrap_or_else(|| default_schedule(a, b, levels));
    if schedule.len() != levels + 1 {
        return Err(Error::LengthMismatch {
            expected: levels + 1,
            found: schedule.len(),
        });
    }
    plan_with(target, a, b, schedule, BudgetMetric::L0, calibration)
}

fn plan_with(
    target: TargetFunctional,
    a: f64,
    b: f64,
    schedule: Vec<f64>,
    metric: BudgetMetric,
    calibration: Calibration,
) -> Result<DudleyPlan> {
    if !(a < b) {
        return Err(Error::OutOfDomain {
            what: "interval end",
            value: b,
        });
    }
    if target.horizon() >= b {
        return Err(Error::OutOfDomain {
            what: "target horizon",
            value: target.horizon(),
        });
    }
    if schedule.len() < 2
        || schedule[0] < a
        || *schedule.last().unwrap() >= b
        || schedule.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::InvalidGrid(format!(
            "schedule {schedule:?} is not strictly increasing inside [{a}, {b})"
        )));
    }
    if calibration.paths == 0 {
        return Err(Error::EmptyInput("calibration paths"));
    }
    let levels = schedule.len() - 1;
    let budgets: Vec<f64> = (1..=levels).map(|n| 0.25f64.powi(n as i32)).collect();
    let mut p = DudleyPlan {
        target,
        a,
        b,
        schedule,
        budgets,
        measured: Vec::new(),
        metric,
    };
    let grid = p.calibration_grid(a.min(0.0))?;
    let per_path: Vec<Result<Vec<f64>>> = map_paths(calibration.paths, calibration.key, |_, k| {
        let path = sample_path(&grid, k);
        let exact = p.target.eval(&path, f64::INFINITY)?;
        p.schedule[..levels]
            .iter()
            .map(|an| {
                let approx = p.target.eval(&path, *an)?;
                Ok(metric.distance(sub(&exact, &approx).norm()))
            })
            .collect()
    });
    let mut sums = vec![0.0; levels];
    for r in per_path {
        for (s, v) in sums.iter_mut().zip(r?) {
            *s += v;
        }
    }
    p.measured = sums.iter().map(|s| s / calibration.paths as f64).collect();
    if let BudgetMetric::Lp(_) = metric {
        if p.measured.iter().any(|m| !m.is_finite()) {
            return Err(Error::InfiniteMoment);
        }
    }
    for (n, (m, bud)) in p.measured.iter().zip(&p.budgets).enumerate() {
        if m > bud {
            return Err(Error::BudgetUnmet {
                level: n + 1,
                measured: *m,
                budget: *bud,
            });
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelBlock {
    pub n: usize,
    pub start: f64,
    pub end: f64,
    /// `ξ_n - ξ_{n-1}`
    pub diff: VectorPathValue,
    pub tau: f64,
    pub clock_value: f64,
    pub overshoot: f64,
    pub resolved: bool,
    /// `η_n = ‖ξ_n - ξ_{n-1}‖ h_n(τ_n)^{1/2}`, the block's `L²` norm.
    pub eta: f64,
}

impl LevelBlock {
    pub fn is_empty(&self) -> bool {
        self.diff.0.iter().all(|x| *x == 0.0)
    }

    fn weight(&self, t: f64) -> f64 {
        if t >= self.start && t < self.tau {
            1.0 / (self.end - t)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssembledIntegrand {
    pub levels: Vec<LevelBlock>,
    pub path: BrownianPath,
    /// `ζ(b) = ∫ φ dW`
    pub terminal: VectorPathValue,
    /// `ξ` evaluated on the path.
    pub target: VectorPathValue,
}

impl AssembledIntegrand {
    pub fn integrand(&self) -> Vec<VectorPathValue> {
        let dim = self.target.dim();
        self.path.times()[..self.path.n_cells()]
            .iter()
            .map(|&t| {
                let mut v = VectorPathValue::zeros(dim);
                for l in self.levels.iter().filter(|l| !l.is_empty()) {
                    let w = l.weight(t);
                    if w != 0.0 {
                        for (vi, di) in v.0.iter_mut().zip(&l.diff.0) {
                            *vi += w * di;
                        }
                    }
                }
                v
            })
            .collect()
    }

    /// `‖φ‖²_{L²} = Σ_n η_n²`
    pub fn l2_norm_sq(&self) -> f64 {
        self.levels.iter().map(|l| l.eta * l.eta).sum()
    }

    pub fn flagged(&self) -> usize {
        self.levels.iter().filter(|l| !l.resolved).count()
    }

    pub fn summary(&self) -> AssemblySummary {
        AssemblySummary {
            terminal: self.terminal.clone(),
            target: self.target.clone(),
            etas: self.levels.iter().map(|l| l.eta).collect(),
            l2_norm_sq: self.l2_norm_sq(),
            flagged: self.flagged(),
            active: self.levels.iter().filter(|l| !l.is_empty()).count(),
        }
    }
}

/// Per-path output of an ensemble run without the path itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssemblySummary {
    pub terminal: VectorPathValue,
    pub target: VectorPathValue,
    pub etas: Vec<f64>,
    pub l2_norm_sq: f64,
    pub flagged: usize,
    /// Levels with a nonzero difference.
    pub active: usize,
}

/// Level-by-level assembly on `path`. Barrier refinement (bridge draws from
/// `key`) is applied when `refine` is given.
pub fn assemble(
    plan: &DudleyPlan,
    path: &BrownianPath,
    refine: Option<&RefinePolicy>,
    key: StreamKey,
) -> Result<AssembledIntegrand> {
    let dim = plan.target.dim();
    let mut path = path.clone();
    let mut prev = VectorPathValue::zeros(dim);
    let mut levels = Vec::with_capacity(plan.levels());
    for n in 1..=plan.levels() {
        let (start, end) = (plan.schedule[n - 1], plan.schedule[n]);
        let xi_n = plan.target.eval(&path, start)?;
        let diff = sub(&xi_n, &prev);
        prev = xi_n;
        if diff.0.iter().all(|x| *x == 0.0) {
            levels.push(LevelBlock {
                n,
                start,
                end,
                diff,
                tau: start,
                clock_value: 0.0,
                overshoot: 0.0,
                resolved: true,
                eta: 0.0,
            });
            continue;
        }
        let clock = Clock::new(start, end)?;
        let outcome = match refine {
            Some(policy) => {
                let (p, o) = hit_refined(&path, &clock, 1.0, policy, key.fork(n as u64))?;
                path = p;
                o
            }
            None => hit_on_grid(&path, &clock, 1.0)?,
        };
        let (tau, clock_value, overshoot, resolved) = match outcome {
            GridHit::Hit {
                sample, overshoot, ..
            } => (sample.tau, sample.clock_value, overshoot, true),
            GridHit::Unresolved {
                last_time,
                terminal_y,
                ..
            } => (last_time, clock.h(last_time), terminal_y - 1.0, false),
        };
        levels.push(LevelBlock {
            n,
            start,
            end,
            eta: diff.norm() * clock_value.sqrt(),
            diff,
            tau,
            clock_value,
            overshoot,
            resolved,
        });
    }
    let target = plan.target.eval(&path, f64::INFINITY)?;
    let mut out = AssembledIntegrand {
        levels,
        path,
        terminal: VectorPathValue::zeros(dim),
        target,
    };
    out.terminal = vector_ito_sum(&out.path, &out.integrand())?;
    Ok(out)
}

/// Assembly options shared by ensemble runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssemblyOptions {
    pub steps_per_segment: usize,
    pub cap_factor: f64,
    pub refine: Option<RefinePolicy>,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            steps_per_segment: 16,
            cap_factor: 4_194_304.0,
            refine: Some(RefinePolicy::default()),
        }
    }
}

/// Sample `paths` driving paths and assemble each. Path `i` uses
/// `key.path(i)`; its refinement draws use a fork of that key.
pub fn run_ensemble(
    plan: &DudleyPlan,
    opts: &AssemblyOptions,
    paths: usize,
    key: StreamKey,
) -> Result<Vec<AssemblySummary>> {
    let grid = plan.grid(plan.a.min(0.0), opts.steps_per_segment, opts.cap_factor)?;
    map_paths(paths, key, |_, k| {
        let path = sample_path(&grid, k);
        assemble(plan, &path, opts.refine.as_ref(), k.fork(0xd0d1)).map(|a| a.summary())
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerminalReport {
    /// `E min(‖ζ(b) - ξ‖, 1)`
    pub metric: McEstimate,
    /// `E ‖ζ(b) - ξ‖^p` when requested.
    pub lp_metric: Option<McEstimate>,
    /// Fraction of paths with at least one unresolved active level.
    pub flag_rate: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const MIN_TERMINAL_PATHS: usize = 1000;

pub fn terminal_check(summaries: &[AssemblySummary], tolerance: f64, p: Option<f64>) -> Result<TerminalReport> {
    if summaries.len() < MIN_TERMINAL_PATHS {
        return Err(Error::EmptyInput("terminal check needs at least 1000 paths"));
    }
    let dists: Vec<f64> = summaries
        .iter()
        .map(|s| sub(&s.terminal, &s.target).norm())
        .collect();
    let l0: Vec<f64> = dists.iter().map(|d| d.min(1.0)).collect();
    let metric = McEstimate::from_samples(&l0);
    let lp_metric = p.map(|p| {
        let v: Vec<f64> = dists.iter().map(|d| d.powf(p)).collect();
        McEstimate::from_samples(&v)
    });
    let flag_rate =
        summaries.iter().filter(|s| s.flagged > 0).count() as f64 / summaries.len() as f64;
    let pass = metric.mean < tolerance && lp_metric.is_none_or(|m| m.mean < tolerance);
    Ok(TerminalReport {
        metric,
        lp_metric,
        flag_rate,
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(seed: u64) -> Calibration {
        Calibration {
            paths: 4000,
            key: StreamKey::new(seed),
        }
    }

    fn half() -> TargetFunctional {
        TargetFunctional::Value { t: 0.5, scale: 1.0 }
    }

    #[test]
    fn default_schedule_examples() {
        let s = default_schedule(0.0, 1.0, 3);
        assert_eq!(s, vec![0.5, 0.75, 0.875, 0.9375]);
    }

    #[test]
    fn plan_examples() {
        let p = plan(TargetFunctional::Constant { value: vec![2.0, -1.0] }, 0.0, 1.0, 6, None, cal(1)).unwrap();
        assert!(p.measured.iter().all(|m| *m == 0.0));
        let sched = vec![0.2, 0.3, 0.5, 0.7, 0.9];
        let p = plan(
            TargetFunctional::Value { t: 0.5, scale: 1.0 },
            0.0,
            1.0,
            4,
            Some(sched.clone()),
            Calibration { paths: 20, key: StreamKey::new(2) },
        );
        // 0.2 is too far from the horizon for a 1/4 budget.
        assert!(matches!(p, Err(Error::BudgetUnmet { level: 1, .. })), "{p:?}");
        let sched = vec![0.45, 0.4985, 0.5, 0.75, 0.9];
        let p = plan(half(), 0.0, 1.0, 4, Some(sched.clone()), cal(3)).unwrap();
        assert_eq!(p.measured[2], 0.0);
        assert_eq!(p.measured[3], 0.0);
        assert!(p.measured[0] > p.measured[1] && p.measured[1] > 0.0);
        // Frozen-path error oracle: E min(|W(1/2) - W(a)|, 1) ≈ sqrt(2(1/2 - a)/π).
        let oracle = (2.0 * 0.05 / std::f64::consts::PI).sqrt();
        assert!((p.measured[0] - oracle).abs() < 0.01, "{}", p.measured[0]);
        assert!(plan(TargetFunctional::Value { t: 1.0, scale: 1.0 }, 0.0, 1.0, 2, None, cal(1)).is_err());
    }

    #[test]
    fn constant_target_is_a_single_block() {
        let p = plan(TargetFunctional::Constant { value: vec![0.7] }, 0.0, 1.0, 6, None, cal(1)).unwrap();
        let grid = p.grid(0.0, 16, 4_194_304.0).unwrap();
        let path = sample_path(&grid, StreamKey::new(10));
        let a = assemble(&p, &path, Some(&RefinePolicy::default()), StreamKey::new(11)).unwrap();
        assert_eq!(a.levels.iter().filter(|l| !l.is_empty()).count(), 1);
        if a.flagged() == 0 {
            let l = &a.levels[0];
            assert!((a.terminal.0[0] - 0.7 * (1.0 + l.overshoot)).abs() < 1e-9);
            assert!((a.terminal.0[0] - 0.7).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_target_gives_zero_integrand() {
        let p = plan(TargetFunctional::Constant { value: vec![0.0] }, 0.0, 1.0, 3, None, cal(1)).unwrap();
        let s = run_ensemble(&p, &AssemblyOptions::default(), 1000, StreamKey::new(1)).unwrap();
        let r = terminal_check(&s, 0.01, None).unwrap();
        assert_eq!(r.metric.mean, 0.0);
        assert!(s.iter().all(|x| x.l2_norm_sq == 0.0));
    }

    #[test]
    fn telescoping_per_path() {
        let sched = vec![0.45, 0.4985, 0.5, 0.75, 0.9];
        let p = plan(half(), 0.0, 1.0, 4, Some(sched), cal(3)).unwrap();
        let grid = p.grid(0.0, 16, 4_194_304.0).unwrap();
        for seed in 0..40 {
            let path = sample_path(&grid, StreamKey::new(seed));
            let a = assemble(&p, &path, Some(&RefinePolicy::default()), StreamKey::new(seed).fork(3)).unwrap();
            if a.flagged() > 0 {
                continue;
            }
            // ζ(b) = Σ (ξ_n - ξ_{n-1})(1 + overshoot_n), which telescopes to ξ_N.
            let expected: f64 = a.levels.iter().map(|l| l.diff.0[0] * (1.0 + l.overshoot)).sum();
            assert!((a.terminal.0[0] - expected).abs() < 1e-9);
            let xi_n = p.target.eval(&a.path, p.schedule[3]).unwrap();
            assert!((a.terminal.0[0] - xi_n.0[0]).abs() < 1e-3);
            // Discrete L² norm of the integrand is close to Σ η_n².
            let phi = a.integrand();
            let disc: f64 = phi.iter().zip(a.path.grid().steps()).map(|(v, dt)| v.norm().powi(2) * dt).sum();
            assert!((disc / a.l2_norm_sq() - 1.0).abs() < 0.2, "{disc} {}", a.l2_norm_sq());
        }
    }

    #[test]
    fn sign_target_small_ensemble() {
        let p = plan(TargetFunctional::Sign { t: 0.5 }, 0.0, 1.0, 6, None, cal(4)).unwrap();
        let s = run_ensemble(&p, &AssemblyOptions::default(), 1000, StreamKey::new(7)).unwrap();
        let r = terminal_check(&s, 0.05, None).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.flag_rate < 0.01);
    }

    #[test]
    fn lp_plan_and_report() {
        let p = plan(half(), 0.0, 1.0, 6, None, cal(5)).unwrap();
        let lp = p.lp_budget(0.5, cal(6)).unwrap();
        assert_eq!(lp.metric, BudgetMetric::Lp(0.5));
        assert!(p.lp_budget(1.5, cal(6)).is_err());
        let s = run_ensemble(&lp, &AssemblyOptions::default(), 1000, StreamKey::new(8)).unwrap();
        let r = terminal_check(&s, 0.05, Some(0.5)).unwrap();
        assert!(r.lp_metric.unwrap().mean < 0.05, "{r:?}");
        assert!(terminal_check(&s[..10], 0.05, None).is_err());
    }
}
