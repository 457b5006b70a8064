//! Experiment configuration files.
//!
//! A config is a TOML document (or JSON, chosen by the `.json` extension)
//! naming one experiment, its seed and path count, shared grid settings,
//! an optional table of experiment parameters and optional tolerances.
//! Unknown keys are rejected everywhere.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stochrep_core::dudley::TargetFunctional;
use stochrep_core::weak_strong::IntegrandFamily;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    HittingLaw,
    Dichotomy,
    Counterexample,
    Dudley,
    Universal,
    Isometry,
    Doob,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::HittingLaw,
        ExperimentId::Dichotomy,
        ExperimentId::Counterexample,
        ExperimentId::Dudley,
        ExperimentId::Universal,
        ExperimentId::Isometry,
        ExperimentId::Doob,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::HittingLaw => "hitting-law",
            ExperimentId::Dichotomy => "dichotomy",
            ExperimentId::Counterexample => "counterexample",
            ExperimentId::Dudley => "dudley",
            ExperimentId::Universal => "universal",
            ExperimentId::Isometry => "isometry",
            ExperimentId::Doob => "doob",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grid settings shared by the path-based experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Uniform steps on `[0, T]` (isometry, doob).
    pub steps: Option<usize>,
    /// Clock steps per doubling segment of a hitting block.
    #[serde(default = "default_steps_per_segment")]
    pub steps_per_segment: usize,
    /// Largest clock value of a block grid, in units of the block's clock unit.
    #[serde(default = "default_cap_factor")]
    pub cap_factor: f64,
    /// Barrier refinement of hitting cells.
    #[serde(default = "yes")]
    pub refine: bool,
}

fn default_steps_per_segment() -> usize {
    16
}

fn default_cap_factor() -> f64 {
    4_194_304.0
}

fn yes() -> bool {
    true
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            steps: None,
            steps_per_segment: default_steps_per_segment(),
            cap_factor: default_cap_factor(),
            refine: true,
        }
    }
}

/// Tolerances; unset values fall back to per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub ks: Option<f64>,
    /// Absolute tolerance on spot probabilities.
    pub spot: Option<f64>,
    /// Multiplier on the Monte Carlo standard error.
    pub stderr_k: Option<f64>,
    /// Relative change allowed for a stabilizing median.
    pub median_change: Option<f64>,
    /// Required decrease factor of the analytic product CDF.
    pub product_factor: Option<f64>,
    pub l0: Option<f64>,
    pub l0_constant: Option<f64>,
    pub flag_rate: Option<f64>,
    /// Required median relative difference of two integrand norms.
    pub norm_diff: Option<f64>,
    /// Relative tolerance on realized quadratic variation.
    pub qv_rel: Option<f64>,
    /// Allowed `|κ - 3|` of recovered increments.
    pub kurtosis: Option<f64>,
    pub round_trip: Option<f64>,
    /// Relative tolerance of the weak/strong identity.
    pub identity: Option<f64>,
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, Option<f64>); 13] {
        [
            ("ks", self.ks),
            ("spot", self.spot),
            ("stderr_k", self.stderr_k),
            ("median_change", self.median_change),
            ("product_factor", self.product_factor),
            ("l0", self.l0),
            ("l0_constant", self.l0_constant),
            ("flag_rate", self.flag_rate),
            ("norm_diff", self.norm_diff),
            ("qv_rel", self.qv_rel),
            ("kurtosis", self.kurtosis),
            ("round_trip", self.round_trip),
            ("identity", self.identity),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HittingLawParams {
    /// Standard deviation of the Gaussian level.
    pub sigma: f64,
    /// Clock interval `[a, b)`.
    pub a: f64,
    pub b: f64,
    /// Fixed level of the first-passage law.
    pub levy_level: f64,
    pub spot_time: f64,
    pub band_points: Vec<f64>,
    pub band_sigmas: Vec<f64>,
    pub band_times: Vec<f64>,
}

impl Default for HittingLawParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            a: 0.0,
            b: 1.0,
            levy_level: 1.0,
            spot_time: 1.0,
            band_points: vec![1.0],
            band_sigmas: vec![0.5, 2.0],
            band_times: vec![0.25, 1.0, 4.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DichotomyParams {
    pub geometric_n: Vec<usize>,
    pub harmonic_n: Vec<usize>,
    pub lambda: f64,
    /// Exponent of the exploratory `ℓ^p` norms; none by default.
    pub lp_exponent: Option<f64>,
}

impl Default for DichotomyParams {
    fn default() -> Self {
        Self {
            geometric_n: vec![64, 4096],
            harmonic_n: vec![100, 1000, 10_000],
            lambda: 10.0,
            lp_exponent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleParams {
    /// Blocks simulated on the grid backend.
    pub blocks: usize,
    pub grid_paths: usize,
    /// Steps per doubling segment for the refinement study.
    pub resolutions: Vec<usize>,
    pub refinement_paths: usize,
    pub refinement_cap: f64,
    /// Block counts of the strong-norm study (exact backend).
    pub norm_n: Vec<usize>,
    pub norm_paths: usize,
    pub moment_exponent: f64,
    /// Exponent of the weak moment bound, in `(2/3, 1)`.
    pub bound_exponent: f64,
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        Self {
            blocks: 4,
            grid_paths: 2000,
            resolutions: vec![4, 16, 64],
            refinement_paths: 2000,
            refinement_cap: 1e5,
            norm_n: vec![100, 1000, 10_000],
            norm_paths: 1000,
            moment_exponent: 0.5,
            bound_exponent: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DudleyParams {
    pub levels: usize,
    pub targets: Vec<TargetFunctional>,
    pub calibration_paths: usize,
    /// Levels of the block that cancels `W(1/2)` on `[1/2, 1]`.
    pub psi_levels: usize,
}

impl Default for DudleyParams {
    fn default() -> Self {
        Self {
            levels: 6,
            targets: vec![
                TargetFunctional::Constant {
                    value: vec![1.0, -0.5],
                },
                TargetFunctional::Sign { t: 0.5 },
                TargetFunctional::Value { t: 0.5, scale: 1.0 },
            ],
            calibration_paths: 4000,
            psi_levels: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniversalParams {
    pub targets: Vec<Vec<f64>>,
    /// Visits per target; targets are alternated.
    pub visits: usize,
}

impl Default for UniversalParams {
    fn default() -> Self {
        Self {
            targets: vec![vec![1.0, 0.0], vec![-0.5, 2.0]],
            visits: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsometryParams {
    pub families: Vec<IntegrandFamily>,
    pub horizon: f64,
    pub eps: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl Default for IsometryParams {
    fn default() -> Self {
        Self {
            families: vec![
                IntegrandFamily::Deterministic,
                IntegrandFamily::PreviousIncrement,
                IntegrandFamily::RunningValue,
            ],
            horizon: 1.0,
            eps: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            deltas: vec![0.1, 0.3, 1.0, 3.0],
        }
    }
}

/// `g(s) = intercept + slope · s`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoobParams {
    pub intercept: f64,
    pub slope: f64,
    pub horizon: f64,
    pub floor: f64,
}

impl Default for DoobParams {
    fn default() -> Self {
        Self {
            intercept: 1.0,
            slope: 1.0,
            horizon: 1.0,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub paths: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, rename = "hitting-law", skip_serializing_if = "Option::is_none")]
    pub hitting_law: Option<HittingLawParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dichotomy: Option<DichotomyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dudley: Option<DudleyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universal: Option<UniversalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometry: Option<IsometryParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doob: Option<DoobParams>,
}

impl ExperimentConfig {
    /// Minimal config with default parameters.
    pub fn new(experiment: ExperimentId, seed: u64, paths: usize) -> Self {
        Self {
            experiment,
            seed,
            paths,
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            hitting_law: None,
            dichotomy: None,
            counterexample: None,
            dudley: None,
            universal: None,
            isometry: None,
            doob: None,
        }
    }

    fn present_tables(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.hitting_law.is_some() {
            v.push("hitting-law");
        }
        if self.dichotomy.is_some() {
            v.push("dichotomy");
        }
        if self.counterexample.is_some() {
            v.push("counterexample");
        }
        if self.dudley.is_some() {
            v.push("dudley");
        }
        if self.universal.is_some() {
            v.push("universal");
        }
        if self.isometry.is_some() {
            v.push("isometry");
        }
        if self.doob.is_some() {
            v.push("doob");
        }
        v
    }

    /// Semantic checks beyond parsing. Returns the offending key and a message.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let bad = |key: &'static str, msg: String| Err((key, msg));
        if self.paths == 0 {
            return bad("paths", "paths must be positive".into());
        }
        if self.grid.steps == Some(0) {
            return bad("steps", "grid steps must be positive".into());
        }
        if self.grid.steps_per_segment == 0 {
            return bad("steps_per_segment", "steps_per_segment must be positive".into());
        }
        if !(self.grid.cap_factor > 1.0) {
            return bad("cap_factor", "cap_factor must exceed 1".into());
        }
        for (k, v) in self.tolerances.entries() {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(k, format!("tolerance {k} must be positive, got {v}"));
                }
            }
        }
        for t in self.present_tables() {
            if t != self.experiment.as_str() {
                return bad(
                    "experiment",
                    format!("parameter table [{t}] does not belong to experiment {}", self.experiment),
                );
            }
        }
        let positive = |key: &'static str, xs: &[usize]| {
            if xs.is_empty() || xs.contains(&0) {
                Err((key, format!("{key} must be a nonempty list of positive counts")))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            ExperimentId::HittingLaw => {
                let p = self.hitting_law.clone().unwrap_or_default();
                if !(p.sigma > 0.0) || p.band_sigmas.iter().any(|s| !(*s > 0.0)) {
                    return bad("sigma", "level standard deviations must be positive".into());
                }
                if !(p.a < p.b) {
                    return bad("b", "clock interval needs a < b".into());
                }
                if !(p.spot_time > 0.0) || p.band_times.iter().any(|t| !(*t > 0.0)) {
                    return bad("band_times", "survival times must be positive".into());
                }
                if p.levy_level == 0.0 {
                    return bad("levy_level", "first-passage level must be nonzero".into());
                }
            }
            ExperimentId::Dichotomy => {
                let p = self.dichotomy.clone().unwrap_or_default();
                positive("geometric_n", &p.geometric_n)?;
                positive("harmonic_n", &p.harmonic_n)?;
                if !(p.lambda > 0.0) {
                    return bad("lambda", "lambda must be positive".into());
                }
                if let Some(q) = p.lp_exponent {
                    if !(q > 0.0) {
                        return bad("lp_exponent", "lp_exponent must be positive".into());
                    }
                }
            }
            ExperimentId::Counterexample => {
                let p = self.counterexample.clone().unwrap_or_default();
                positive("resolutions", &p.resolutions)?;
                positive("norm_n", &p.norm_n)?;
                if p.resolutions.len() < 3 {
                    return bad("resolutions", "the refinement study needs at least 3 resolutions".into());
                }
                if p.blocks == 0 || p.grid_paths == 0 || p.refinement_paths == 0 || p.norm_paths == 0 {
                    return bad("blocks", "block and path counts must be positive".into());
                }
                if !(p.refinement_cap > 1.0) {
                    return bad("refinement_cap", "refinement_cap must exceed 1".into());
                }
                if !(p.moment_exponent > 0.0 && p.moment_exponent < 1.0) {
                    return bad("moment_exponent", "moment_exponent must lie in (0, 1)".into());
                }
                if !(p.bound_exponent > 2.0 / 3.0 && p.bound_exponent < 1.0) {
                    return bad("bound_exponent", "bound_exponent must lie in (2/3, 1)".into());
                }
            }
            ExperimentId::Dudley => {
                let p = self.dudley.clone().unwrap_or_default();
                if p.levels == 0 || p.psi_levels == 0 || p.calibration_paths == 0 {
                    return bad("levels", "levels and calibration paths must be positive".into());
                }
                if p.targets.is_empty() {
                    return bad("targets", "at least one target is needed".into());
                }
            }
            ExperimentId::Universal => {
                let p = self.universal.clone().unwrap_or_default();
                if p.targets.len() < 2 || p.visits == 0 {
                    return bad("targets", "the walk needs two or more targets and positive visits".into());
                }
                let d = p.targets[0].len();
                if d == 0 || p.targets.iter().any(|t| t.len() != d) {
                    return bad("targets", "targets must share a positive dimension".into());
                }
            }
            ExperimentId::Isometry => {
                let p = self.isometry.clone().unwrap_or_default();
                if p.families.is_empty() {
                    return bad("families", "at least one integrand family is needed".into());
                }
                if !(p.horizon > 0.0) {
                    return bad("horizon", "horizon must be positive".into());
                }
                if p.eps.iter().chain(&p.deltas).any(|e| !(*e > 0.0)) {
                    return bad("eps", "tail thresholds must be positive".into());
                }
            }
            ExperimentId::Doob => {
                let p = self.doob.clone().unwrap_or_default();
                if !(p.horizon > 0.0) || !(p.floor > 0.0) {
                    return bad("floor", "horizon and floor must be positive".into());
                }
                let g0 = p.intercept;
                let g1 = p.intercept + p.slope * p.horizon;
                if g0.abs() < p.floor || g1.abs() < p.floor || g0.signum() != g1.signum() {
                    return bad("intercept", "g must stay away from zero on [0, T]".into());
                }
            }
        }
        Ok(())
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first `key = ...` or `"key":` occurrence, if any.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        let bare = t.strip_prefix(key).map(|r| r.trim_start().starts_with('='));
        let quoted = t
            .strip_prefix(&format!("\"{key}\""))
            .map(|r| r.trim_start().starts_with(':'));
        bare == Some(true) || quoted == Some(true)
    })
    .map(|i| i + 1)
}

pub fn parse_config(text: &str, json: bool, origin: &str) -> Result<ExperimentConfig, HarnessError> {
    let cfg: ExperimentConfig = if json {
        serde_json::from_str(text).map_err(|e| HarnessError::Config {
            path: origin.to_string(),
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| HarnessError::Config {
            path: origin.to_string(),
            line: e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })?
    };
    cfg.validate().map_err(|(key, message)| HarnessError::Config {
        path: origin.to_string(),
        line: line_of_key(text, key).unwrap_or(1),
        message,
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let json = path.extension().is_some_and(|e| e == "json");
    parse_config(&text, json, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml() {
        let c = parse_config("experiment = \"doob\"\nseed = 3\npaths = 10\n", false, "x").unwrap();
        assert_eq!(c.experiment, ExperimentId::Doob);
        assert_eq!(c.grid, GridConfig::default());
        assert!(c.doob.is_none());
    }

    #[test]
    fn negative_paths_is_line_anchored() {
        let text = "experiment = \"doob\"\nseed = 3\npaths = -5\n";
        match parse_config(text, false, "cfg.toml") {
            Err(HarnessError::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_paths_and_bad_tolerance() {
        let text = "experiment = \"doob\"\nseed = 3\npaths = 0\n";
        assert!(matches!(parse_config(text, false, "c"), Err(HarnessError::Config { line: 3, .. })));
        let text = "experiment = \"doob\"\nseed = 3\npaths = 5\n[tolerances]\nks = -0.1\n";
        assert!(matches!(parse_config(text, false, "c"), Err(HarnessError::Config { line: 5, .. })));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "experiment = \"doob\"\nseed = 3\npaths = 5\ncolour = 1\n";
        assert!(parse_config(text, false, "c").is_err());
        let text = "experiment = \"doob\"\nseed = 3\npaths = 5\n[doob]\nslop = 1.0\n";
        assert!(parse_config(text, false, "c").is_err());
        let text = "experiment = \"doob\"\nseed = 3\npaths = 5\n[dichotomy]\nlambda = 2.0\n";
        assert!(parse_config(text, false, "c").is_err());
    }

    #[test]
    fn json_alternative() {
        let text = r#"{"experiment": "dudley", "seed": 1, "paths": 100,
            "dudley": {"levels": 3, "targets": [{"kind": "sign", "t": 0.5}]}}"#;
        let c = parse_config(text, true, "c.json").unwrap();
        assert_eq!(c.dudley.unwrap().levels, 3);
        let bad = "{\"experiment\": \"dudley\",\n \"seed\": 1,\n \"paths\": 0}";
        assert!(matches!(parse_config(bad, true, "c.json"), Err(HarnessError::Config { line: 3, .. })));
    }

    #[test]
    fn table_must_match_experiment() {
        let c = ExperimentConfig {
            isometry: Some(IsometryParams::default()),
            ..ExperimentConfig::new(ExperimentId::Doob, 1, 1)
        };
        assert!(c.validate().is_err());
    }
}
