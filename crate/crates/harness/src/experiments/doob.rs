use stochrep_core::grid::TimeGrid;
use stochrep_core::weak_strong::doob_experiment;

use super::{Ctx, Outcome};
use crate::error::HarnessError;
use crate::report::{Check, CriterionId, CriterionResult, Samples};
use crate::svg::{Chart, Series};

pub(super) fn run(ctx: &Ctx) -> Result<Outcome, HarnessError> {
    let p = ctx.cfg.doob.clone().unwrap_or_default();
    let tol = &ctx.cfg.tolerances;
    let qv_rel = tol.qv_rel.unwrap_or(0.02);
    let k = tol.stderr_k.unwrap_or(3.0);
    let kurt_tol = tol.kurtosis.unwrap_or(0.1);
    let rt_tol = tol.round_trip.unwrap_or(1e-10);
    let (c, s, t) = (p.intercept, p.slope, p.horizon);
    let grid = TimeGrid::uniform(0.0, t, ctx.cfg.grid.steps.unwrap_or(1000))?;
    let g = move |u: f64| c + s * u;
    let r = doob_experiment(&grid, g, p.floor, ctx.cfg.paths, ctx.key)?;
    // ∫_0^T (c + s u)² du
    let qv = c * c * t + c * s * t * t + s * s * t.powi(3) / 3.0;
    let checks = vec![
        Check::near_mc("mean realized quadratic variation", r.qv, qv, qv_rel * qv),
        Check::near_stderr("recovered increment variance / dt", r.variance_ratio, 1.0, k),
        Check::near("raw kurtosis of recovered increments", r.kurtosis, r.variance_ratio.n, 3.0, kurt_tol),
        Check::below("relative re-integration round-trip error", r.max_round_trip_error, r.qv.n, rt_tol),
    ];
    let mut sorted_qv = r.qv_samples.clone();
    sorted_qv.sort_by(|a, b| a.total_cmp(b));
    let fig = Chart::new("Realized quadratic variation per path", "rank / n", "realized QV")
        .with(Series::solid(
            "realized",
            sorted_qv
                .iter()
                .enumerate()
                .step_by((sorted_qv.len() / 400).max(1))
                .map(|(i, v)| ((i + 1) as f64 / sorted_qv.len() as f64, *v))
                .collect(),
        ))
        .with(Series::dashed("int g^2 ds", vec![(0.0, qv), (1.0, qv)]))
        .render();
    let mut samples = Samples::default();
    samples.push("realized qv", r.qv_samples);
    let mut out = Outcome::new(vec![CriterionResult::new(CriterionId::NoiseRecovery, checks)], samples);
    out.figures = vec![("quadratic-variation".into(), fig)];
    Ok(out)
}
