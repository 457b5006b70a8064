use stochrep_core::stats::{median, sorted};
use stochrep_core::tail::{
    dichotomy_report, product_cdf, product_cdf_lower_bound, sample_lp_norm, CoefficientRule,
    DichotomyReport, Regime, TailSequenceSpec, XiLaw, BUILTIN_TAIL_CONSTANT,
};

use super::{Ctx, Outcome};
use crate::error::HarnessError;
use crate::report::{Check, CriterionId, CriterionResult, Samples};
use crate::svg::{ecdf_points, Chart, Series};

struct Arm {
    label: &'static str,
    spec: TailSequenceSpec,
    report: DichotomyReport,
}

pub(super) fn run(ctx: &Ctx) -> Result<Outcome, HarnessError> {
    let p = ctx.cfg.dichotomy.clone().unwrap_or_default();
    let tol = &ctx.cfg.tolerances;
    let ks_tol = tol.ks.unwrap_or(0.02);
    let median_tol = tol.median_change.unwrap_or(0.05);
    let factor = tol.product_factor.unwrap_or(2.0);
    let n = ctx.cfg.paths;
    let lambda = p.lambda;

    let mut arms = Vec::new();
    let rules = [
        ("geometric", CoefficientRule::Geometric { ratio: 0.5 }, &p.geometric_n, 1u64),
        ("harmonic", CoefficientRule::Harmonic, &p.harmonic_n, 2u64),
    ];
    for (label, rule, sizes, tag) in &rules {
        for &size in sizes.iter() {
            let spec = TailSequenceSpec::from_rule(rule, size, XiLaw::Builtin)?;
            let report = dichotomy_report(&spec, n, ctx.key.fork(*tag).fork(size as u64), &[lambda])?;
            arms.push(Arm { label, spec, report });
        }
    }
    let of = |label: &'static str| arms.iter().filter(move |a| a.label == label);

    let mut checks = Vec::new();
    let geo: Vec<&Arm> = of("geometric").collect();
    let first = geo[0].report.empirical_median;
    for a in &geo[1..] {
        let change = (a.report.empirical_median / first - 1.0).abs();
        checks.push(Check::below(
            format!("geometric median change N = {} -> {}", geo[0].report.n, a.report.n),
            change,
            n,
            median_tol,
        ));
    }
    let harm: Vec<&Arm> = of("harmonic").collect();
    let f_first = product_cdf(&harm[0].spec, lambda)?;
    let f_last = product_cdf(&harm[harm.len() - 1].spec, lambda)?;
    checks.push(Check::at_least(
        format!(
            "harmonic product_cdf({lambda}) decrease factor N = {} -> {}",
            harm[0].report.n,
            harm[harm.len() - 1].report.n
        ),
        f_first / f_last,
        0,
        factor,
    ));
    let increasing = harm
        .windows(2)
        .all(|w| w[1].report.empirical_median > w[0].report.empirical_median);
    checks.push(Check::holds("harmonic empirical median strictly increasing", increasing, n));
    for a in &arms {
        checks.push(Check::below(
            format!("ks {} N = {}", a.label, a.report.n),
            a.report.ks,
            n,
            ks_tol,
        ));
    }
    for a in &arms {
        let expected = if a.label == "geometric" { Regime::Bounded } else { Regime::Divergent };
        checks.push(Check::holds(
            format!("{} N = {} regime {:?}", a.label, a.report.n, a.report.verdict),
            a.report.verdict == expected,
            a.report.n,
        ));
        if let Some(lb) = product_cdf_lower_bound(&a.spec, lambda, BUILTIN_TAIL_CONSTANT) {
            let f = product_cdf(&a.spec, lambda)?;
            checks.push(Check::holds(
                format!("{} N = {} lower bound {lb:.4} <= product_cdf {f:.4}", a.label, a.report.n),
                lb <= f,
                0,
            ));
        }
    }

    let mut samples = Samples::default();
    for a in &arms {
        samples.push(format!("sup {} N={}", a.label, a.report.n), a.report.sup_samples.clone());
    }
    if let Some(q) = p.lp_exponent {
        for a in &arms {
            let v = sample_lp_norm(&a.spec, q, n, ctx.key.fork(3).fork(a.report.n as u64));
            samples.push(format!("lp{q} {} N={}", a.label, a.report.n), v);
        }
    }

    let mut cdf = Chart::new("Supremum of c_n xi_n, c_n = 1/n", "lambda", "P(sup <= lambda)").log_x();
    for a in &harm {
        let s = sorted(&a.report.sup_samples);
        let lo = s[0].max(1e-3);
        let hi = s[s.len() - 1];
        let grid: Vec<f64> = (0..150).map(|i| lo * (hi / lo).powf(i as f64 / 149.0)).collect();
        cdf = cdf
            .with(Series::solid(format!("empirical N = {}", a.report.n), ecdf_points(&s, 300)))
            .with(Series::dashed(
                format!("product N = {}", a.report.n),
                grid.iter().map(|l| (*l, product_cdf(&a.spec, *l).unwrap_or(f64::NAN))).collect(),
            ));
    }
    let mut medians = Chart::new("Median of sup c_n xi_n", "N", "median").log_x().log_y();
    for label in ["geometric", "harmonic"] {
        medians = medians.with(Series::solid(
            label,
            of(label)
                .map(|a| (a.report.n as f64, median(&a.report.sup_samples)))
                .collect(),
        ));
    }

    let mut out = Outcome::new(
        vec![CriterionResult::new(CriterionId::SummabilityDichotomy, checks)],
        samples,
    );
    out.figures = vec![
        ("sup-cdf".into(), cdf.render()),
        ("sup-median".into(), medians.render()),
    ];
    Ok(out)
}
