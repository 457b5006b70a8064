use statrs::distribution::{ContinuousCDF, Normal};
use stochrep_core::hitting::{
    arctan_survival, levy_cdf, sample_first_passage_exact, sample_hitting, tail_survival, Clock,
    Level, LevelLaw, Survival, TailLaw,
};
use stochrep_core::rng::map_paths;
use stochrep_core::stats::{ks_statistic, sorted};
use stochrep_core::McEstimate;

use super::{Ctx, Outcome};
use crate::error::HarnessError;
use crate::report::{Check, CriterionId, CriterionResult, Samples};
use crate::svg::{ecdf_points, Chart, Series};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub(super) fn run(ctx: &Ctx) -> Result<Outcome, HarnessError> {
    let p = ctx.cfg.hitting_law.clone().unwrap_or_default();
    let tol = &ctx.cfg.tolerances;
    let ks_tol = tol.ks.unwrap_or(0.01);
    let spot_tol = tol.spot.unwrap_or(0.005);
    let k = tol.stderr_k.unwrap_or(3.0);
    let n = ctx.cfg.paths;
    let clock = Clock::new(p.a, p.b)?;
    let mut samples = Samples::default();

    let draws = map_paths(n, ctx.key.fork(1), |_, k| {
        sample_hitting(&clock, Level::Gaussian { sigma: p.sigma }, &mut k.rng(), None)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let h: Vec<f64> = draws.iter().map(|d| d.clock_value).collect();
    let h_sorted = sorted(&h);
    let arctan_cdf = |t: f64| if t > 0.0 { 1.0 - arctan_survival(p.sigma, t) } else { 0.0 };
    let ks = ks_statistic(&h_sorted, arctan_cdf)?;
    let spot = McEstimate::proportion(&h, |x| *x > p.spot_time);
    let in_range = draws.iter().all(|d| d.tau >= p.a && d.tau < p.b);
    let arctan = CriterionResult::new(
        CriterionId::ArctanSurvival,
        vec![
            Check::below("ks distance of h(tau)", ks, n, ks_tol),
            Check::near_mc(
                format!("P(h(tau) > {})", p.spot_time),
                spot,
                arctan_survival(p.sigma, p.spot_time),
                spot_tol,
            ),
            Check::holds("tau inside [a, b)", in_range, n),
        ],
    );

    let x = p.levy_level;
    let tau: Vec<f64> = map_paths(n, ctx.key.fork(2), |_, k| sample_first_passage_exact(x, &mut k.rng()));
    let tau_sorted = sorted(&tau);
    let levy_ks = ks_statistic(&tau_sorted, |t| levy_cdf(x, t))?;
    let levy_spot = McEstimate::proportion(&tau, |t| *t > p.spot_time);
    // P(τ_x > t) = P(|Z| < |x|/sqrt t)
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let oracle = 2.0 * std_normal.cdf(x.abs() / p.spot_time.sqrt()) - 1.0;
    let levy = CriterionResult::new(
        CriterionId::FirstPassageLaw,
        vec![
            Check::below("ks distance of tau", levy_ks, n, ks_tol),
            Check::near_mc(format!("P(tau > {})", p.spot_time), levy_spot, oracle, spot_tol),
        ],
    );

    let mut laws: Vec<(String, LevelLaw)> = p
        .band_points
        .iter()
        .map(|x| (format!("point {x}"), LevelLaw::Point(*x)))
        .collect();
    laws.extend(
        p.band_sigmas
            .iter()
            .map(|s| (format!("gaussian {s}"), LevelLaw::Gaussian { sigma: *s })),
    );
    let mut band_checks = Vec::new();
    for (i, (name, law)) in laws.iter().enumerate() {
        let hl: Vec<f64> = map_paths(n, ctx.key.fork(3).fork(i as u64), |_, key| {
            let mut rng = key.rng();
            let eta = law.as_level().draw(&mut rng);
            sample_first_passage_exact(eta, &mut rng)
        });
        let mut fractions = Vec::new();
        for &t in &p.band_times {
            let s = McEstimate::proportion(&hl, |v| *v > t);
            let Survival::Band { lower, upper } = tail_survival(TailLaw::Bounds(*law), t)? else {
                unreachable!("bounds law yields a band")
            };
            let slack = k * s.stderr;
            band_checks.push(Check {
                name: format!("{name}: band [{lower:.4}, {upper:.4}] at t = {t}"),
                estimate: s.mean,
                stderr: s.stderr,
                n_samples: s.n,
                target: Some(0.5 * (lower + upper)),
                tolerance: k,
                rule: crate::report::Rule::NearStderr,
                pass: s.mean >= lower - slack && s.mean <= upper + slack,
            });
            fractions.push(s.mean);
        }
        samples.push(format!("band-survival {name}"), fractions);
    }
    let band = CriterionResult::new(CriterionId::SurvivalBand, band_checks);

    let ts = log_grid(1e-3, 1e3, 120);
    let figure = Chart::new("Clock value at a Gaussian level", "t", "P(h(tau) <= t)")
        .log_x()
        .with(Series::solid("empirical", ecdf_points(&h_sorted, 400)))
        .with(Series::dashed(
            "1 - (2/pi) arctan(sigma/sqrt t)",
            ts.iter().map(|t| (*t, arctan_cdf(*t))).collect(),
        ))
        .render();
    let levy_fig = Chart::new("First passage of a fixed level", "t", "P(tau <= t)")
        .log_x()
        .with(Series::solid("empirical", ecdf_points(&tau_sorted, 400)))
        .with(Series::dashed(
            "Levy law",
            ts.iter().map(|t| (*t, levy_cdf(x, *t))).collect(),
        ))
        .render();

    samples.push("arctan h(tau)", h);
    samples.push("levy tau", tau);
    let mut out = Outcome::new(vec![arctan, levy, band], samples);
    out.figures = vec![("arctan-cdf".into(), figure), ("levy-cdf".into(), levy_fig)];
    Ok(out)
}
