use serde::Serialize;

use super::{assemble, DudleyPlan};
use crate::error::{Error, Result};
use crate::hitting::RefinePolicy;
use crate::paths::{ito_path, BrownianPath};
use crate::rng::StreamKey;

/// `∫_0^{1/2} ψ dW` and `∫_0^1 ψ dW` for one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiOutcome {
    pub value_at_half: f64,
    pub value_at_one: f64,
    /// `W(1/2)` read off the path.
    pub w_half: f64,
    pub flagged: bool,
}

/// `ψ = 1` on `[0, 1/2)` followed by the blocks of `plan`, which must target
/// `-W(1/2)` on `[1/2, 1]`. `path` must start at 0 and contain the plan grid.
pub fn psi_zero_sum(
    plan: &DudleyPlan,
    path: &BrownianPath,
    refine: Option<&RefinePolicy>,
    key: StreamKey,
) -> Result<PsiOutcome> {
    if plan.a != 0.5 || plan.b != 1.0 || path.grid().start() != 0.0 {
        return Err(Error::Unsupported(
            "psi needs a plan on [1/2, 1] and a path starting at 0".into(),
        ));
    }
    let assembled = assemble(plan, path, refine, key)?;
    let p = &assembled.path;
    let block = assembled.integrand();
    let psi: Vec<f64> = p.times()[..p.n_cells()]
        .iter()
        .zip(&block)
        .map(|(t, v)| if *t < 0.5 { 1.0 } else { v.0[0] })
        .collect();
    let running = ito_path(p, &psi)?;
    let half = p
        .grid()
        .index_of(0.5)
        .ok_or_else(|| Error::InvalidGrid("1/2 is not a grid point".into()))?;
    Ok(PsiOutcome {
        value_at_half: running[half],
        value_at_one: *running.last().unwrap(),
        w_half: p.values()[half],
        flagged: assembled.flagged() > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dudley::{plan, Calibration, TargetFunctional};
    use crate::grid::TimeGrid;
    use crate::paths::sample_path;

    fn psi_setup() -> (DudleyPlan, TimeGrid) {
        let p = plan(
            TargetFunctional::Value { t: 0.5, scale: -1.0 },
            0.5,
            1.0,
            4,
            None,
            Calibration { paths: 100, key: StreamKey::new(1) },
        )
        .unwrap();
        let mut ts = p.grid(0.0, 16, 4_194_304.0).unwrap().times().to_vec();
        ts.extend((0..50).map(|k| k as f64 / 100.0));
        (p, TimeGrid::from_points(ts, 1.0).unwrap())
    }

    #[test]
    fn value_at_half_is_exact_and_odd() {
        let (p, g) = psi_setup();
        let policy = RefinePolicy::default();
        for seed in 0..50 {
            let path = sample_path(&g, StreamKey::new(seed));
            let o = psi_zero_sum(&p, &path, Some(&policy), StreamKey::new(seed).fork(1)).unwrap();
            assert_eq!(o.value_at_half, o.w_half);
            let neg = psi_zero_sum(&p, &path.negated(), Some(&policy), StreamKey::new(seed).fork(1)).unwrap();
            assert_eq!(neg.value_at_half, -o.value_at_half);
            if !o.flagged {
                assert!(o.value_at_one.abs() < 1e-3, "{o:?}");
            }
        }
    }

    #[test]
    fn rejects_wrong_interval() {
        let p = plan(
            TargetFunctional::Value { t: 0.5, scale: -1.0 },
            0.6,
            1.0,
            2,
            None,
            Calibration { paths: 10, key: StreamKey::new(1) },
        )
        .unwrap();
        let (_, g) = psi_setup();
        let path = sample_path(&g, StreamKey::new(0));
        assert!(psi_zero_sum(&p, &path, None, StreamKey::new(0)).is_err());
    }
}
