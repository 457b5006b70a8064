//! Verdict types and the files written for each run.

use std::path::Path;

use serde::Serialize;
use stochrep_core::McEstimate;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::HarnessError;

/// How a check's estimate is compared against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// `estimate < tolerance`
    Below,
    /// `estimate >= tolerance`
    AtLeast,
    /// `|estimate - target| <= tolerance`
    Near,
    /// `|estimate - target| <= tolerance · stderr`
    NearStderr,
    /// A boolean property; `estimate` is 1 or 0.
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub target: Option<f64>,
    pub tolerance: f64,
    pub rule: Rule,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, estimate: f64, n: usize, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            stderr: 0.0,
            n_samples: n,
            target: None,
            tolerance,
            rule: Rule::Below,
            pass: estimate < tolerance,
        }
    }

    pub fn below_mc(name: impl Into<String>, est: McEstimate, tolerance: f64) -> Self {
        Self {
            stderr: est.stderr,
            ..Self::below(name, est.mean, est.n, tolerance)
        }
    }

    pub fn at_least(name: impl Into<String>, estimate: f64, n: usize, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            stderr: 0.0,
            n_samples: n,
            target: None,
            tolerance,
            rule: Rule::AtLeast,
            pass: estimate >= tolerance,
        }
    }

    pub fn near(name: impl Into<String>, estimate: f64, n: usize, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            stderr: 0.0,
            n_samples: n,
            target: Some(target),
            tolerance,
            rule: Rule::Near,
            pass: (estimate - target).abs() <= tolerance,
        }
    }

    pub fn near_mc(name: impl Into<String>, est: McEstimate, target: f64, tolerance: f64) -> Self {
        Self {
            stderr: est.stderr,
            ..Self::near(name, est.mean, est.n, target, tolerance)
        }
    }

    pub fn near_stderr(name: impl Into<String>, est: McEstimate, target: f64, k: f64) -> Self {
        Self {
            name: name.into(),
            estimate: est.mean,
            stderr: est.stderr,
            n_samples: est.n,
            target: Some(target),
            tolerance: k,
            rule: Rule::NearStderr,
            pass: est.within(target, k),
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool, n: usize) -> Self {
        Self {
            name: name.into(),
            estimate: if ok { 1.0 } else { 0.0 },
            stderr: 0.0,
            n_samples: n,
            target: None,
            tolerance: 1.0,
            rule: Rule::Holds,
            pass: ok,
        }
    }
}

/// One claim under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionId {
    ArctanSurvival,
    FirstPassageLaw,
    SurvivalBand,
    SummabilityDichotomy,
    StrongNormDivergence,
    TerminalRepresentation,
    ZeroSumIntegrand,
    UniversalWalk,
    MomentSandwich,
    NoiseRecovery,
    WeakStrongIdentity,
    Reproducibility,
}

impl CriterionId {
    pub const ALL: [CriterionId; 12] = [
        CriterionId::ArctanSurvival,
        CriterionId::FirstPassageLaw,
        CriterionId::SurvivalBand,
        CriterionId::SummabilityDichotomy,
        CriterionId::StrongNormDivergence,
        CriterionId::TerminalRepresentation,
        CriterionId::ZeroSumIntegrand,
        CriterionId::UniversalWalk,
        CriterionId::MomentSandwich,
        CriterionId::NoiseRecovery,
        CriterionId::WeakStrongIdentity,
        CriterionId::Reproducibility,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CriterionId::ArctanSurvival => "arctan-survival",
            CriterionId::FirstPassageLaw => "first-passage-law",
            CriterionId::SurvivalBand => "survival-band",
            CriterionId::SummabilityDichotomy => "summability-dichotomy",
            CriterionId::StrongNormDivergence => "strong-norm-divergence",
            CriterionId::TerminalRepresentation => "terminal-representation",
            CriterionId::ZeroSumIntegrand => "zero-sum-integrand",
            CriterionId::UniversalWalk => "universal-walk",
            CriterionId::MomentSandwich => "moment-sandwich",
            CriterionId::NoiseRecovery => "noise-recovery",
            CriterionId::WeakStrongIdentity => "weak-strong-identity",
            CriterionId::Reproducibility => "reproducibility",
        }
    }

    /// The claim the criterion stands for.
    pub fn anchor(&self) -> &'static str {
        match self {
            CriterionId::ArctanSurvival => "P(h(tau) > t) = (2/pi) arctan(sigma/sqrt t) for a Gaussian level",
            CriterionId::FirstPassageLaw => "first passage of a fixed level has the Levy density",
            CriterionId::SurvivalBand => "P(h(tau) > t) is comparable to E min(|eta|/sqrt t, 1)",
            CriterionId::SummabilityDichotomy => "sup c_n xi_n is finite iff sum c_n is finite",
            CriterionId::StrongNormDivergence => "weakly integrable integrand with infinite strong L2 norm",
            CriterionId::TerminalRepresentation => "a measurable terminal value is a stochastic integral",
            CriterionId::ZeroSumIntegrand => "a nonzero integrand whose integral over [0, 1] vanishes",
            CriterionId::UniversalWalk => "one running integral approaching every target along a subsequence",
            CriterionId::MomentSandwich => "Ito isometry with Doob's maximal inequality at p = 2",
            CriterionId::NoiseRecovery => "driving noise recovered from M = int g dW",
            CriterionId::WeakStrongIdentity => "pairing the vector integral equals integrating the pairing",
            CriterionId::Reproducibility => "(config, seed) determines every sample byte",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl std::fmt::Display for CriterionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: CriterionId,
    pub anchor: &'static str,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl CriterionResult {
    pub fn new(id: CriterionId, checks: Vec<Check>) -> Self {
        Self {
            id,
            anchor: id.anchor(),
            pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Criteria each experiment contributes to.
pub fn criteria_of(id: ExperimentId) -> &'static [CriterionId] {
    match id {
        ExperimentId::HittingLaw => &[
            CriterionId::ArctanSurvival,
            CriterionId::FirstPassageLaw,
            CriterionId::SurvivalBand,
        ],
        ExperimentId::Dichotomy => &[CriterionId::SummabilityDichotomy],
        ExperimentId::Counterexample => &[
            CriterionId::StrongNormDivergence,
            CriterionId::WeakStrongIdentity,
        ],
        ExperimentId::Dudley => &[CriterionId::TerminalRepresentation, CriterionId::ZeroSumIntegrand],
        ExperimentId::Universal => &[CriterionId::UniversalWalk],
        ExperimentId::Isometry => &[CriterionId::MomentSandwich, CriterionId::WeakStrongIdentity],
        ExperimentId::Doob => &[CriterionId::NoiseRecovery],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: ExperimentId,
    pub anchors: Vec<&'static str>,
    pub seed: u64,
    pub paths: usize,
    pub pass: bool,
    /// Fraction of hitting blocks left unresolved by the grid; `None` when
    /// the experiment has no grid hitting.
    pub flag_rate: Option<f64>,
    pub strict: bool,
    pub criteria: Vec<CriterionResult>,
    pub config: ExperimentConfig,
    /// The only field that differs between identical runs.
    pub wall_clock_seconds: f64,
}

impl Report {
    /// Human-readable reasons for failure, one per failing check.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.criteria {
            for k in c.failing() {
                out.push(format!(
                    "criterion {} failed: {} = {} ({:?} {})",
                    c.id, k.name, k.estimate, k.rule, k.tolerance
                ));
            }
        }
        out
    }
}

/// Named sample series written in long format.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Samples {
    pub series: Vec<(String, Vec<f64>)>,
}

impl Samples {
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.series.push((name.into(), values));
    }

    /// Columns `series,index,value`.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["series", "index", "value"])?;
        for (name, vs) in &self.series {
            for (i, v) in vs.iter().enumerate() {
                w.write_record([name.as_str(), &i.to_string(), &v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
