//! Deterministic experiment harness over `stochrep-core`.
//!
//! [`run`] executes one config and writes `report.json`, `samples.csv` and
//! `figure-*.svg` into an output directory; [`run_suite`] does the same for
//! every config in a directory and aggregates the verdicts per criterion.

pub mod config;
pub mod error;
mod experiments;
pub mod report;
pub mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentId};
pub use error::HarnessError;
pub use report::{Check, CriterionId, CriterionResult, Report};

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    /// Fail every criterion of a run whose unresolved-hit rate exceeds the
    /// `flag_rate` tolerance.
    pub strict: bool,
}

impl RunOptions {
    fn apply(&self, cfg: &ExperimentConfig, origin: &str) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = cfg.clone();
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.paths {
            cfg.paths = p;
        }
        cfg.validate().map_err(|(key, message)| HarnessError::Config {
            path: format!("{origin} (with overrides)"),
            line: 0,
            message: format!("{key}: {message}"),
        })?;
        Ok(cfg)
    }
}

pub const REPORT_FILE: &str = "report.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUITE_FILE: &str = "suite.json";
pub const DEFAULT_FLAG_RATE: f64 = 0.01;

/// Run one experiment and write its artifacts into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Report, HarnessError> {
    let cfg = opts.apply(cfg, cfg.experiment.as_str())?;
    let started = Instant::now();
    let outcome = experiments::run_experiment(&cfg)?;
    let mut criteria = outcome.criteria;
    if opts.strict {
        let tol = cfg.tolerances.flag_rate.unwrap_or(DEFAULT_FLAG_RATE);
        if let Some(rate) = outcome.flag_rate {
            for c in &mut criteria {
                c.checks.push(Check::below("unresolved-hit rate (strict)", rate, outcome.flag_total, tol));
                c.pass = c.checks.iter().all(|k| k.pass);
            }
        }
    }
    let report = Report {
        experiment: cfg.experiment,
        anchors: criteria.iter().map(|c| c.anchor).collect(),
        seed: cfg.seed,
        paths: cfg.paths,
        pass: criteria.iter().all(|c| c.pass),
        flag_rate: outcome.flag_rate,
        strict: opts.strict,
        criteria,
        config: cfg,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    outcome.samples.write_csv(&out.join(SAMPLES_FILE))?;
    for (name, svg) in &outcome.figures {
        std::fs::write(out.join(format!("figure-{name}.svg")), svg)?;
    }
    Ok(report)
}

/// Config files of a suite directory (`*.toml`, `*.json`), sorted by name.
pub fn suite_configs(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::Config {
            path: dir.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "toml" || e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::EmptySuite(dir.display().to_string()));
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteMember {
    pub name: String,
    pub experiment: ExperimentId,
    pub pass: bool,
    pub failures: Vec<String>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteRow {
    pub criterion: CriterionId,
    pub anchor: &'static str,
    /// Members contributing to the criterion; empty when uncovered.
    pub members: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproducibilityCheck {
    /// Members whose `samples.csv` differed between the two runs.
    pub differing_samples: Vec<String>,
    /// Members whose reports differed outside wall-clock fields.
    pub differing_reports: Vec<String>,
    pub first_run_seconds: f64,
    pub runtime_limit_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub pass: bool,
    pub members: Vec<SuiteMember>,
    pub table: Vec<SuiteRow>,
    pub reproducibility: Option<ReproducibilityCheck>,
    pub wall_clock_seconds: f64,
}

impl SuiteReport {
    pub fn row(&self, id: CriterionId) -> Option<&SuiteRow> {
        self.table.iter().find(|r| r.criterion == id)
    }

    /// Plain-text table, one line per criterion.
    pub fn table_text(&self) -> String {
        let mut s = String::new();
        for r in &self.table {
            let verdict = if r.members.is_empty() {
                "SKIP"
            } else if r.pass {
                "PASS"
            } else {
                "FAIL"
            };
            s.push_str(&format!(
                "{verdict}  {:<24} {:<70} [{}]\n",
                r.criterion.as_str(),
                r.anchor,
                r.members.join(", ")
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteOptions {
    pub run: RunOptions,
    /// Rerun every member and compare the emitted bytes.
    pub check_reproducible: bool,
    pub runtime_limit_seconds: Option<f64>,
}

fn member_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn without_wall_clock(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|k, _| !k.starts_with("wall_clock"));
            m.values_mut().for_each(without_wall_clock);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(without_wall_clock),
        _ => {}
    }
}

fn run_members(
    configs: &[(PathBuf, ExperimentConfig)],
    out: &Path,
    opts: RunOptions,
) -> Result<Vec<(String, Report)>, HarnessError> {
    configs
        .iter()
        .map(|(path, cfg)| {
            let name = member_name(path);
            run(cfg, &out.join(&name), opts).map(|r| (name, r))
        })
        .collect()
}

/// Run every config in `dir`, writing member artifacts to `out/<name>/` and
/// the aggregate to `out/suite.json`. All configs are validated before any
/// experiment runs.
pub fn run_suite(dir: &Path, out: &Path, opts: SuiteOptions) -> Result<SuiteReport, HarnessError> {
    let configs = suite_configs(dir)?
        .into_iter()
        .map(|p| {
            let cfg = load_config(&p)?;
            let cfg = opts.run.apply(&cfg, &p.display().to_string())?;
            Ok((p, cfg))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let started = Instant::now();
    let reports = run_members(&configs, out, opts.run)?;
    let first_run = started.elapsed().as_secs_f64();

    let mut table: BTreeMap<CriterionId, (Vec<String>, bool)> =
        CriterionId::ALL.iter().map(|c| (*c, (Vec::new(), true))).collect();
    for (name, r) in &reports {
        for c in &r.criteria {
            let e = table.get_mut(&c.id).expect("all criteria are listed");
            e.0.push(name.clone());
            e.1 &= c.pass;
        }
    }

    let reproducibility = if opts.check_reproducible {
        let rerun = out.join("rerun");
        let again = run_members(&configs, &rerun, opts.run)?;
        let mut differing_samples = Vec::new();
        let mut differing_reports = Vec::new();
        for ((name, _), _) in reports.iter().zip(&again) {
            let a = std::fs::read(out.join(name).join(SAMPLES_FILE))?;
            let b = std::fs::read(rerun.join(name).join(SAMPLES_FILE))?;
            if a != b {
                differing_samples.push(name.clone());
            }
            let mut ra: serde_json::Value =
                serde_json::from_slice(&std::fs::read(out.join(name).join(REPORT_FILE))?)?;
            let mut rb: serde_json::Value =
                serde_json::from_slice(&std::fs::read(rerun.join(name).join(REPORT_FILE))?)?;
            without_wall_clock(&mut ra);
            without_wall_clock(&mut rb);
            if ra != rb {
                differing_reports.push(name.clone());
            }
        }
        let limit = opts.runtime_limit_seconds.unwrap_or(600.0);
        let e = table.get_mut(&CriterionId::Reproducibility).expect("listed");
        e.0 = reports.iter().map(|(n, _)| n.clone()).collect();
        e.1 = differing_samples.is_empty() && differing_reports.is_empty() && first_run < limit;
        Some(ReproducibilityCheck {
            differing_samples,
            differing_reports,
            first_run_seconds: first_run,
            runtime_limit_seconds: limit,
        })
    } else {
        None
    };

    let members: Vec<SuiteMember> = reports
        .iter()
        .map(|(name, r)| SuiteMember {
            name: name.clone(),
            experiment: r.experiment,
            pass: r.pass,
            failures: r.failures(),
            wall_clock_seconds: r.wall_clock_seconds,
        })
        .collect();
    let table: Vec<SuiteRow> = table
        .into_iter()
        .map(|(criterion, (members, pass))| SuiteRow {
            criterion,
            anchor: criterion.anchor(),
            pass: pass && !members.is_empty(),
            members,
        })
        .collect();
    let pass = members.iter().all(|m| m.pass) && reproducibility.as_ref().is_none_or(|_| {
        table
            .iter()
            .find(|r| r.criterion == CriterionId::Reproducibility)
            .is_some_and(|r| r.pass)
    });
    let suite = SuiteReport {
        pass,
        members,
        table,
        reproducibility,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    std::fs::write(out.join(SUITE_FILE), serde_json::to_string_pretty(&suite)? + "\n")?;
    Ok(suite)
}

/// `(experiment, criteria anchors)` for `list`.
pub fn experiment_catalog() -> Vec<(ExperimentId, Vec<(CriterionId, &'static str)>)> {
    ExperimentId::ALL
        .iter()
        .map(|e| {
            (
                *e,
                report::criteria_of(*e).iter().map(|c| (*c, c.anchor())).collect(),
            )
        })
        .collect()
}
