use serde::Serialize;

use super::{sub, TargetFunctional};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hitting::{hit_on_grid, hit_refined, Clock, ClockGridSpec, GridHit, RefinePolicy};
use crate::paths::{sample_path, vector_ito_path, VectorPathValue};
use crate::rng::StreamKey;

/// `x / (1 + ‖x‖)`, onto the open unit ball.
pub fn to_unit_ball(x: &[f64]) -> Vec<f64> {
    let n = crate::paths::norm(x);
    x.iter().map(|v| v / (1.0 + n)).collect()
}

/// `1{‖y‖ < 1} y / (1 - ‖y‖)`, the inverse of [`to_unit_ball`].
pub fn from_unit_ball(y: &[f64]) -> Vec<f64> {
    let n = crate::paths::norm(y);
    if n < 1.0 {
        y.iter().map(|v| v / (1.0 - n)).collect()
    } else {
        vec![0.0; y.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkTrajectory {
    /// `ζ(n)` for `n = 0..=T`.
    pub zeta: Vec<VectorPathValue>,
    /// Target index `α(n)` represented on `[n, n+1)`.
    pub alpha: Vec<usize>,
    /// Every target evaluated on the path.
    pub targets: Vec<VectorPathValue>,
    pub flagged: usize,
}

impl WalkTrajectory {
    /// `‖ζ(n+1) - ρ_j‖` at each visit `n` of target `j`, in visit order.
    pub fn visit_distances(&self, j: usize) -> Vec<f64> {
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == j)
            .map(|(n, _)| sub(&self.zeta[n + 1], &self.targets[j]).norm())
            .collect()
    }
}

/// Accumulating walk on `[0, T]`, `T = alpha.len()`. Unit block `[n, n+1)`
/// carries a one-level representation of `ρ_{α(n)} - ρ_{α(n-1)}` (with
/// `ρ_{α(-1)} = 0`) hitting on `[n + 1/2, n + 3/4)`, so that
/// `ζ(n+1) ≈ ρ_{α(n)}`. Targets must be readable by time `n + 1/2` at their
/// first use.
pub fn universal_walk(
    targets: &[TargetFunctional],
    alpha: &[usize],
    steps_per_segment: usize,
    cap_factor: f64,
    refine: Option<&RefinePolicy>,
    key: StreamKey,
) -> Result<WalkTrajectory> {
    if targets.is_empty() || alpha.is_empty() {
        return Err(Error::EmptyInput("walk targets and visit sequence"));
    }
    let dim = targets[0].dim();
    if let Some(t) = targets.iter().find(|t| t.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: t.dim(),
        });
    }
    if let Some(&j) = alpha.iter().find(|j| **j >= targets.len()) {
        return Err(Error::OutOfDomain {
            what: "visit index",
            value: j as f64,
        });
    }
    let big_t = alpha.len();
    for (n, &j) in alpha.iter().enumerate() {
        if targets[j].horizon() > n as f64 + 0.5 {
            return Err(Error::OutOfDomain {
                what: "target horizon",
                value: targets[j].horizon(),
            });
        }
    }
    let mut ts = Vec::new();
    for n in 0..big_t {
        let lo = n as f64;
        ts.push(lo);
        for t in targets {
            if let TargetFunctional::Value { t, .. } | TargetFunctional::Sign { t } = t {
                ts.push(*t);
            }
        }
        let clock = Clock::new(lo + 0.5, lo + 0.75)?;
        ts.extend(ClockGridSpec::doubling(1.0, cap_factor, steps_per_segment).times(&clock));
        ts.push(lo + 0.75);
    }
    ts.push(big_t as f64);
    let grid = TimeGrid::from_points(ts, big_t as f64)?;
    let mut path = sample_path(&grid, key);

    // (start, end, diff, tau)
    let mut blocks: Vec<(f64, f64, VectorPathValue, f64)> = Vec::with_capacity(big_t);
    let mut flagged = 0;
    for (n, &j) in alpha.iter().enumerate() {
        let start = n as f64 + 0.5;
        let end = start + 0.25;
        let cur = targets[j].eval(&path, start)?;
        let prev = if n == 0 {
            VectorPathValue::zeros(dim)
        } else {
            targets[alpha[n - 1]].eval(&path, start)?
        };
        let diff = sub(&cur, &prev);
        if diff.0.iter().all(|x| *x == 0.0) {
            blocks.push((start, end, diff, start));
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
        let tau = match outcome {
            GridHit::Hit { sample, .. } => sample.tau,
            GridHit::Unresolved { last_time, .. } => {
                flagged += 1;
                last_time
            }
        };
        blocks.push((start, end, diff, tau));
    }

    let times = path.times();
    let mut b = 0;
    let integrand: Vec<VectorPathValue> = times[..path.n_cells()]
        .iter()
        .map(|&t| {
            while b + 1 < blocks.len() && t >= blocks[b].1 {
                b += 1;
            }
            let (start, end, ref diff, tau) = blocks[b];
            if t >= start && t < tau {
                VectorPathValue(diff.0.iter().map(|d| d / (end - t)).collect())
            } else {
                VectorPathValue::zeros(dim)
            }
        })
        .collect();
    let running = vector_ito_path(&path, &integrand)?;
    let zeta = (0..=big_t)
        .map(|n| {
            let i = path.grid().index_of(n as f64).expect("integer times are grid points");
            running[i].clone()
        })
        .collect();
    let target_values = targets
        .iter()
        .map(|t| t.eval(&path, f64::INFINITY))
        .collect::<Result<Vec<_>>>()?;
    Ok(WalkTrajectory {
        zeta,
        alpha: alpha.to_vec(),
        targets: target_values,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_round_trip() {
        for y in [vec![0.3, -0.4], vec![0.0, 0.0], vec![0.9, 0.0]] {
            let back = to_unit_ball(&from_unit_ball(&y));
            for (a, b) in back.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(from_unit_ball(&[1.0, 0.0]), vec![0.0, 0.0]);
        let x = [3.0, 4.0];
        let u = to_unit_ball(&x);
        assert!((crate::paths::norm(&u) - 5.0 / 6.0).abs() < 1e-15);
        for (a, b) in from_unit_ball(&u).iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_constants() {
        let targets = vec![
            TargetFunctional::Constant { value: vec![1.0, 0.0] },
            TargetFunctional::Constant { value: vec![-0.5, 2.0] },
        ];
        let alpha: Vec<usize> = (0..8).map(|n| n % 2).collect();
        let policy = RefinePolicy::default();
        let mut ok = 0;
        for seed in 0..20 {
            let w = universal_walk(&targets, &alpha, 16, 4_194_304.0, Some(&policy), StreamKey::new(seed)).unwrap();
            assert_eq!(w.zeta.len(), 9);
            assert_eq!(w.zeta[0].norm(), 0.0);
            if w.flagged == 0 {
                ok += 1;
                for j in 0..2 {
                    assert!(w.visit_distances(j).iter().all(|d| *d < 1e-2), "{:?}", w.visit_distances(j));
                }
            }
        }
        assert!(ok >= 18);
    }

    #[test]
    fn walk_validation() {
        let t = vec![TargetFunctional::Constant { value: vec![1.0] }];
        assert!(universal_walk(&t, &[0, 1], 4, 100.0, None, StreamKey::new(0)).is_err());
        let late = vec![TargetFunctional::Value { t: 3.0, scale: 1.0 }];
        assert!(universal_walk(&late, &[0, 0], 4, 100.0, None, StreamKey::new(0)).is_err());
        assert!(universal_walk(&t, &[], 4, 100.0, None, StreamKey::new(0)).is_err());
    }
}
