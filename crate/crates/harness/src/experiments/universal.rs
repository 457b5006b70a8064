use stochrep_core::dudley::{universal_walk, TargetFunctional};
use stochrep_core::rng::map_paths;
use stochrep_core::McEstimate;

use super::{Ctx, Outcome};
use crate::error::HarnessError;
use crate::report::{Check, CriterionId, CriterionResult, Samples};
use crate::svg::{Chart, Series};

pub(super) fn run(ctx: &Ctx) -> Result<Outcome, HarnessError> {
    let p = ctx.cfg.universal.clone().unwrap_or_default();
    let l0_tol = ctx.cfg.tolerances.l0.unwrap_or(0.05);
    let n = ctx.cfg.paths;
    let targets: Vec<TargetFunctional> = p
        .targets
        .iter()
        .map(|v| TargetFunctional::Constant { value: v.clone() })
        .collect();
    let m = targets.len();
    let alpha: Vec<usize> = (0..m * p.visits).map(|i| i % m).collect();
    let refine = ctx.refine();
    let walks = map_paths(n, ctx.key, |_, key| {
        universal_walk(
            &targets,
            &alpha,
            ctx.cfg.grid.steps_per_segment,
            ctx.cfg.grid.cap_factor,
            refine.as_ref(),
            key,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut checks = Vec::new();
    let mut samples = Samples::default();
    let mut fig = Chart::new("Distance of the walk to each target at its visits", "visit", "E min(|zeta - rho_j|, 1)")
        .log_y();
    for j in 0..m {
        // visit-major: per_visit[v][path]
        let mut per_visit = vec![Vec::with_capacity(n); p.visits];
        for w in &walks {
            for (v, d) in w.visit_distances(j).into_iter().enumerate() {
                per_visit[v].push(d.min(1.0));
            }
        }
        let means: Vec<f64> = per_visit.iter().map(|v| McEstimate::from_samples(v).mean).collect();
        let last = McEstimate::from_samples(&per_visit[p.visits - 1]);
        checks.push(Check::below_mc(
            format!("L0 distance to target {j} at its final visit"),
            last,
            l0_tol,
        ));
        fig = fig.with(Series::solid(
            format!("target {j}"),
            means.iter().enumerate().map(|(v, d)| ((v + 1) as f64, d.max(1e-12))).collect(),
        ));
        samples.push(format!("final-visit distance target {j}"), per_visit.pop().unwrap());
    }
    let flagged: usize = walks.iter().map(|w| w.flagged).sum();
    let blocks = n * alpha.len();
    let mut out = Outcome::new(vec![CriterionResult::new(CriterionId::UniversalWalk, checks)], samples);
    out.figures = vec![("walk-distance".into(), fig.render())];
    out.flag_rate = Some(flagged as f64 / blocks as f64);
    out.flag_total = blocks;
    Ok(out)
}
