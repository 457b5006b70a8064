use stochrep_core::dudley::{
    assemble, plan, psi_zero_sum, run_ensemble, terminal_check, AssemblyOptions, AssemblySummary,
    Calibration, TargetFunctional,
};
use stochrep_core::paths::sample_path;
use stochrep_core::rng::map_paths;
use stochrep_core::stats::{median, sorted};
use stochrep_core::McEstimate;

use super::{Ctx, Outcome};
use crate::error::HarnessError;
use crate::report::{Check, CriterionId, CriterionResult, Samples};
use crate::svg::{ecdf_points, Chart, Series};

fn label(t: &TargetFunctional) -> String {
    match t {
        TargetFunctional::Constant { value } => format!("constant {value:?}"),
        TargetFunctional::Value { t, scale } => format!("{scale} W({t})"),
        TargetFunctional::Sign { t } => format!("sign W({t})"),
    }
}

fn errors(s: &[AssemblySummary]) -> Vec<f64> {
    s.iter()
        .map(|x| {
            x.terminal
                .0
                .iter()
                .zip(&x.target.0)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

pub(super) fn run(ctx: &Ctx) -> Result<Outcome, HarnessError> {
    let p = ctx.cfg.dudley.clone().unwrap_or_default();
    let tol = &ctx.cfg.tolerances;
    let l0_tol = tol.l0.unwrap_or(0.05);
    let const_tol = tol.l0_constant.unwrap_or(0.01);
    let flag_tol = tol.flag_rate.unwrap_or(0.01);
    let diff_tol = tol.norm_diff.unwrap_or(0.1);
    let n = ctx.cfg.paths;
    let opts = AssemblyOptions {
        steps_per_segment: ctx.cfg.grid.steps_per_segment,
        cap_factor: ctx.cfg.grid.cap_factor,
        refine: ctx.refine(),
    };
    let cal = |tag: u64| Calibration {
        paths: p.calibration_paths,
        key: ctx.key.fork(tag),
    };
    let mut samples = Samples::default();
    let mut checks = Vec::new();
    let mut flagged_paths = 0usize;
    let mut flag_total = 0usize;
    let mut error_fig = Chart::new("Terminal error |zeta(1) - xi|", "error", "P(error <= x)").log_x();

    for (i, target) in p.targets.iter().enumerate() {
        let name = label(target);
        let pl = plan(target.clone(), 0.0, 1.0, p.levels, None, cal(10 + i as u64))?;
        let s = run_ensemble(&pl, &opts, n, ctx.key.fork(20 + i as u64))?;
        let tolerance = if target.is_constant() { const_tol } else { l0_tol };
        let r = terminal_check(&s, tolerance, None)?;
        checks.push(Check::below_mc(format!("L0 terminal metric, {name}"), r.metric, tolerance));
        checks.push(Check::below(format!("flag rate, {name}"), r.flag_rate, n, flag_tol));
        flagged_paths += s.iter().filter(|x| x.flagged > 0).count();
        flag_total += n;
        let e = errors(&s);
        error_fig = error_fig.with(Series::solid(name.clone(), ecdf_points(&sorted(&e), 300)));
        samples.push(format!("terminal error {name}"), e);
    }

    // Non-uniqueness: the same target on a path that agrees up to the
    // horizon and is resampled afterwards.
    let half = TargetFunctional::Value { t: 0.5, scale: 1.0 };
    let pl = plan(half, 0.0, 1.0, p.levels, None, cal(30))?;
    let grid = pl.grid(0.0, opts.steps_per_segment, opts.cap_factor)?;
    let pairs = map_paths(n, ctx.key.fork(31), |_, key| {
        let path = sample_path(&grid, key);
        let a = assemble(&pl, &path, opts.refine.as_ref(), key.fork(1))?;
        let other = path.resample_after(0.5, key.fork(2));
        let b = assemble(&pl, &other, opts.refine.as_ref(), key.fork(3))?;
        Ok::<_, stochrep_core::Error>((a.summary(), b.summary()))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let (first, second): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let rel: Vec<f64> = first
        .iter()
        .zip(&second)
        .map(|(a, b)| {
            let (x, y) = (a.l2_norm_sq.sqrt(), b.l2_norm_sq.sqrt());
            if x.max(y) > 0.0 {
                (x - y).abs() / x.max(y)
            } else {
                0.0
            }
        })
        .collect();
    for (tag, s) in [("first", &first), ("resampled", &second)] {
        let r = terminal_check(s, l0_tol, None)?;
        checks.push(Check::below_mc(format!("L0 terminal metric, {tag} of the pair"), r.metric, l0_tol));
        flagged_paths += s.iter().filter(|x| x.flagged > 0).count();
        flag_total += n;
    }
    checks.push(Check::at_least(
        "median relative L2-norm difference of the pair",
        median(&rel),
        n,
        diff_tol,
    ));
    samples.push("pair relative norm difference", rel);
    let terminal = CriterionResult::new(CriterionId::TerminalRepresentation, checks);

    // ψ = 1 on [0, 1/2) followed by a block cancelling W(1/2).
    let neg = TargetFunctional::Value { t: 0.5, scale: -1.0 };
    let pp = plan(neg, 0.5, 1.0, p.psi_levels, None, cal(40))?;
    let grid = pp.grid(0.0, opts.steps_per_segment, opts.cap_factor)?;
    let psi = map_paths(n, ctx.key.fork(41), |_, key| {
        let path = sample_path(&grid, key);
        psi_zero_sum(&pp, &path, opts.refine.as_ref(), key.fork(1))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let exact = psi.iter().all(|o| o.value_at_half == o.w_half);
    let at_one: Vec<f64> = psi.iter().map(|o| o.value_at_one).collect();
    let l0 = McEstimate::from_samples(&at_one.iter().map(|v| v.abs().min(1.0)).collect::<Vec<_>>());
    let psi_flags = psi.iter().filter(|o| o.flagged).count();
    flagged_paths += psi_flags;
    flag_total += n;
    let zero_sum = CriterionResult::new(
        CriterionId::ZeroSumIntegrand,
        vec![
            Check::holds("integral over [0, 1/2] equals W(1/2) on every path", exact, n),
            Check::below_mc("L0 metric of the integral over [0, 1]", l0, l0_tol),
            Check::below("flag rate of the cancelling block", psi_flags as f64 / n as f64, n, flag_tol),
        ],
    );
    samples.push("psi integral over [0, 1]", at_one);

    let mut out = Outcome::new(vec![terminal, zero_sum], samples);
    out.figures = vec![("terminal-error".into(), error_fig.render())];
    out.flag_rate = Some(flagged_paths as f64 / flag_total as f64);
    out.flag_total = flag_total;
    Ok(out)
}
