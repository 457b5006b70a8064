use stochrep_core::grid::TimeGrid;
use stochrep_core::weak_strong::{path_stats, tail_transfer_check, two_sided_check, BoundMode};

use super::{Ctx, Outcome};
use crate::error::HarnessError;
use crate::report::{Check, CriterionId, CriterionResult, Rule, Samples};
use crate::svg::{Chart, Series};

pub(super) fn run(ctx: &Ctx) -> Result<Outcome, HarnessError> {
    let p = ctx.cfg.isometry.clone().unwrap_or_default();
    let identity_tol = ctx.cfg.tolerances.identity.unwrap_or(1e-12);
    let n = ctx.cfg.paths;
    let grid = TimeGrid::uniform(0.0, p.horizon, ctx.cfg.grid.steps.unwrap_or(64))?;
    let mut sandwich = Vec::new();
    let mut identity = Vec::new();
    let mut samples = Samples::default();
    let mut ratio_fig = Chart::new("Tail of sup over terminal-norm bound", "eps", "probability").log_x();

    for (i, fam) in p.families.iter().enumerate() {
        let name = serde_json::to_value(fam)?.as_str().unwrap_or("family").to_string();
        let stats = path_stats(*fam, &grid, n, ctx.key.fork(i as u64))?;
        let c = two_sided_check(&stats, BoundMode::Strict)?;
        // The verdict is the paired test on E(|int Phi dW|^2 - |Phi|^2).
        sandwich.push(Check {
            pass: c.isometry_pass,
            ..Check::near_stderr(
                format!("{name}: E|int Phi dW|^2 against E|Phi|^2 (paired)"),
                c.terminal_moment,
                c.norm_moment.mean,
                3.0,
            )
        });
        let ratio = c.sup_moment.mean / c.norm_moment.mean;
        sandwich.push(Check {
            name: format!("{name}: E sup / E|Phi|^2 in [1, 4] (paired)"),
            estimate: ratio,
            stderr: c.sup_moment.stderr / c.norm_moment.mean,
            n_samples: n,
            target: None,
            tolerance: 3.0,
            rule: Rule::Holds,
            pass: c.lower_pass && c.upper_pass,
        });
        let rows = tail_transfer_check(&stats, &p.eps, &p.deltas)?;
        sandwich.push(Check::holds(
            format!("{name}: tail transfers on {} (eps, delta) pairs", rows.len()),
            rows.iter().all(|r| r.pass),
            n,
        ));
        let mut sup_rows: Vec<(f64, f64)> = Vec::new();
        let mut bound_rows: Vec<(f64, f64)> = Vec::new();
        for &e in &p.eps {
            let best = rows
                .iter()
                .filter(|r| r.eps == e)
                .map(|r| r.sup_bound)
                .fold(f64::INFINITY, f64::min);
            if let Some(r) = rows.iter().find(|r| r.eps == e) {
                sup_rows.push((e, r.sup_tail.mean.max(1e-6)));
            }
            bound_rows.push((e, best.min(1.0)));
        }
        ratio_fig = ratio_fig
            .with(Series::solid(format!("{name} P(sup > eps)"), sup_rows))
            .with(Series::dashed(format!("{name} best bound"), bound_rows));

        let max_err = stats.iter().map(|s| s.consistency_error).fold(0.0, f64::max);
        let scale = stats
            .iter()
            .map(|s| s.sup_sq.sqrt())
            .fold(1.0, f64::max);
        identity.push(Check::below(
            format!("{name}: relative identity error"),
            max_err / scale,
            n,
            identity_tol,
        ));
        identity.push(Check::holds(
            format!("{name}: identity on every path"),
            stats.iter().all(|s| s.consistency_pass),
            n,
        ));
        samples.push(format!("norm sq {name}"), stats.iter().map(|s| s.norm_sq).collect());
        samples.push(format!("sup sq {name}"), stats.iter().map(|s| s.sup_sq).collect());
    }
    let mut out = Outcome::new(
        vec![
            CriterionResult::new(CriterionId::MomentSandwich, sandwich),
            CriterionResult::new(CriterionId::WeakStrongIdentity, identity),
        ],
        samples,
    );
    out.figures = vec![("tail-transfer".into(), ratio_fig.render())];
    Ok(out)
}
