use stochrep_core::counterexample::{
    block_weak_integral, build_process, geometric_coefficients, harmonic_coefficients, process_grid,
    sample_blocks_exact, strong_l2_norm_sq, vector_integrand, weak_moment_bound_check, xi_moment,
    BlockIntegrand, BlockSchedule, GridResolution,
};
use stochrep_core::paths::sample_path;
use stochrep_core::rng::map_paths;
use stochrep_core::stats::{ks_statistic, log_log_slope, median, sorted};
use stochrep_core::tail::theta_survival;
use stochrep_core::weak_strong::weak_strong_consistency;
use stochrep_core::McEstimate;

use super::{Ctx, Outcome};
use crate::error::HarnessError;
use crate::report::{Check, CriterionId, CriterionResult, Samples};
use crate::svg::{ecdf_points, Chart, Series};

pub(super) fn run(ctx: &Ctx) -> Result<Outcome, HarnessError> {
    let p = ctx.cfg.counterexample.clone().unwrap_or_default();
    let tol = &ctx.cfg.tolerances;
    let ks_tol = tol.ks.unwrap_or(0.05);
    let median_tol = tol.median_change.unwrap_or(0.05);
    let k = tol.stderr_k.unwrap_or(3.0);
    let identity_tol = tol.identity.unwrap_or(1e-12);
    let refine = ctx.refine();
    let mut samples = Samples::default();
    let mut checks = Vec::new();

    // Plain first grid crossing on one block: the standardized block integral
    // should shrink as the clock grid is refined.
    let one = BlockSchedule::dyadic(1, 1.0, harmonic_coefficients(1))?;
    let mut errs = Vec::new();
    for &m in &p.resolutions {
        let res = GridResolution {
            steps_per_segment: m,
            cap_factor: p.refinement_cap,
        };
        let grid = process_grid(&one, res, 1)?;
        let e = map_paths(p.refinement_paths, ctx.key.fork(1), |_, key| {
            let path = sample_path(&grid, key);
            build_process(&one, &path, 1, None, key).map(|out| {
                let b = &out.blocks[0];
                (block_weak_integral(b, &out.path) / (b.a - b.s).sqrt()).abs().min(1.0)
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        errs.push(McEstimate::from_samples(&e).mean);
    }
    let steps: Vec<f64> = p.resolutions.iter().map(|m| *m as f64).collect();
    checks.push(Check::below(
        "log-log slope of block integral error against clock steps",
        log_log_slope(&steps, &errs),
        p.refinement_paths,
        0.0,
    ));
    samples.push("refinement error", errs.clone());

    // Grid backend on the first blocks: pooled θ against the arctan law,
    // and the weak/strong identity on the vector integrand.
    let sched = BlockSchedule::dyadic(p.blocks, 1.0, harmonic_coefficients(p.blocks))?;
    let res = GridResolution {
        steps_per_segment: ctx.cfg.grid.steps_per_segment,
        cap_factor: ctx.cfg.grid.cap_factor,
    };
    let grid = process_grid(&sched, res, p.blocks)?;
    let per_path = map_paths(p.grid_paths, ctx.key.fork(2), |_, key| {
        let path = sample_path(&grid, key);
        let out = build_process(&sched, &path, p.blocks, refine.as_ref(), key.fork(1))?;
        let phi = vector_integrand(&out.blocks, &out.path);
        let c = weak_strong_consistency(&phi, &out.path)?;
        Ok::<_, stochrep_core::Error>((out.blocks, c))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let theta: Vec<f64> = per_path
        .iter()
        .flat_map(|(b, _)| b.iter().map(|b| b.theta_or_censored()))
        .collect();
    let flagged = per_path
        .iter()
        .flat_map(|(b, _)| b.iter())
        .filter(|b| !b.resolved)
        .count();
    let theta_sorted = sorted(&theta);
    let ks = ks_statistic(&theta_sorted, |t| if t > 0.0 { 1.0 - theta_survival(t) } else { 0.0 })?;
    checks.push(Check::below("ks of pooled grid-backend theta", ks, theta.len(), ks_tol));
    samples.push("grid theta", theta);
    let max_err = per_path
        .iter()
        .map(|(_, c)| c.max_abs_error / c.scale.max(1.0))
        .fold(0.0, f64::max);
    let identity = CriterionResult::new(
        CriterionId::WeakStrongIdentity,
        vec![
            Check::below("counterexample relative identity error", max_err, p.grid_paths, identity_tol),
            Check::holds(
                "counterexample identity on every path",
                per_path.iter().all(|(_, c)| c.pass),
                p.grid_paths,
            ),
        ],
    );

    // Exact backend: the strong norm Σ c_n² ξ_n² grows with N for c_n = 1/n
    // and stabilizes for c_n = 2^{-n}. Path keys do not depend on N, so the
    // runs for different N are partial sums of the same series.
    let mut med_h = Vec::new();
    let mut med_g = Vec::new();
    let mut small_ensemble: Vec<Vec<BlockIntegrand>> = Vec::new();
    for &nb in &p.norm_n {
        for (label, c, meds, tag) in [
            ("harmonic", harmonic_coefficients(nb), &mut med_h, 3u64),
            ("geometric", geometric_coefficients(nb), &mut med_g, 4u64),
        ] {
            let s = BlockSchedule::uniform(nb, c)?;
            let keep = label == "harmonic" && nb == p.norm_n[0];
            let runs = map_paths(p.norm_paths, ctx.key.fork(tag), |_, key| {
                let blocks = sample_blocks_exact(&s, key);
                let v = strong_l2_norm_sq(&blocks).value;
                (v, if keep { Some(blocks) } else { None })
            });
            let v: Vec<f64> = runs.iter().map(|r| r.0).collect();
            if keep {
                small_ensemble = runs.into_iter().filter_map(|r| r.1).collect();
            }
            meds.push(median(&v));
            samples.push(format!("strong norm sq {label} N={nb}"), v);
        }
    }
    checks.push(Check::holds(
        format!("harmonic strong-norm medians strictly increasing {med_h:?}"),
        med_h.windows(2).all(|w| w[1] > w[0]),
        p.norm_paths,
    ));
    for (i, m) in med_g.iter().enumerate().skip(1) {
        checks.push(Check::below(
            format!("geometric strong-norm median change N = {} -> {}", p.norm_n[0], p.norm_n[i]),
            (m / med_g[0] - 1.0).abs(),
            p.norm_paths,
            median_tol,
        ));
    }

    // E (c_1 ξ_1)^q against the quadrature of the ξ law.
    let q = p.moment_exponent;
    let first = BlockSchedule::uniform(1, vec![1.0])?;
    let mom: Vec<f64> = map_paths(ctx.cfg.paths, ctx.key.fork(5), |_, key| {
        let b = sample_blocks_exact(&first, key)[0];
        (b.c * b.xi).powf(q)
    });
    checks.push(Check::near_stderr(
        format!("E (c_1 xi_1)^{q}"),
        McEstimate::from_samples(&mom),
        xi_moment(q)?,
        k,
    ));
    samples.push(format!("(c_1 xi_1)^{q}"), mom);

    let mut x = vec![0.0; small_ensemble[0].len()];
    x[0] = 1.0;
    if x.len() > 1 {
        x[1] = 1.0;
    }
    let bound = weak_moment_bound_check(&small_ensemble, p.bound_exponent, &x, true)?;
    checks.push(Check {
        name: format!("weak moment bound at p = {} on e_1 + e_2", bound.p),
        estimate: bound.lhs.mean,
        stderr: bound.lhs.stderr,
        n_samples: bound.lhs.n,
        target: Some(bound.rhs),
        tolerance: k,
        rule: crate::report::Rule::Holds,
        pass: bound.pass,
    });

    let theta_grid: Vec<f64> = (0..150).map(|i| 1e-4 * 1e8f64.powf(i as f64 / 149.0)).collect();
    let theta_fig = Chart::new("Grid-backend theta against the arctan law", "t", "P(theta <= t)")
        .log_x()
        .with(Series::solid("empirical", ecdf_points(&theta_sorted, 400)))
        .with(Series::dashed(
            "1 - (2/pi) arctan(1/sqrt t)",
            theta_grid.iter().map(|t| (*t, 1.0 - theta_survival(*t))).collect(),
        ))
        .render();
    let ns: Vec<f64> = p.norm_n.iter().map(|n| *n as f64).collect();
    let div_fig = Chart::new("Median strong norm squared", "N", "median sum c_n^2 xi_n^2")
        .log_x()
        .log_y()
        .with(Series::solid("c_n = 1/n", ns.iter().cloned().zip(med_h.iter().cloned()).collect()))
        .with(Series::solid("c_n = 2^-n", ns.iter().cloned().zip(med_g.iter().cloned()).collect()))
        .render();
    let ref_fig = Chart::new("Plain grid crossing error", "clock steps per segment", "E min(|block integral|, 1)")
        .log_x()
        .log_y()
        .with(Series::solid("error", steps.iter().cloned().zip(errs.iter().cloned()).collect()))
        .render();

    let total_blocks = p.grid_paths * p.blocks;
    let mut out = Outcome::new(
        vec![CriterionResult::new(CriterionId::StrongNormDivergence, checks), identity],
        samples,
    );
    out.figures = vec![
        ("theta-cdf".into(), theta_fig),
        ("divergence".into(), div_fig),
        ("refinement".into(), ref_fig),
    ];
    out.flag_rate = Some(flagged as f64 / total_blocks as f64);
    out.flag_total = total_blocks;
    Ok(out)
}
