//! One runner per experiment id. Each runner turns a validated config into
//! criterion verdicts, raw sample series and figures.

mod counterexample;
mod dichotomy;
mod doob;
mod dudley;
mod hitting_law;
mod isometry;
mod universal;

use stochrep_core::hitting::RefinePolicy;
use stochrep_core::StreamKey;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::HarnessError;
use crate::report::{CriterionResult, Samples};

pub struct Outcome {
    pub criteria: Vec<CriterionResult>,
    pub samples: Samples,
    /// `(name, svg)`; written as `figure-<name>.svg`.
    pub figures: Vec<(String, String)>,
    pub flag_rate: Option<f64>,
    /// Hitting blocks behind `flag_rate`.
    pub flag_total: usize,
}

impl Outcome {
    fn new(criteria: Vec<CriterionResult>, samples: Samples) -> Self {
        Self {
            criteria,
            samples,
            figures: Vec::new(),
            flag_rate: None,
            flag_total: 0,
        }
    }
}

pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub key: StreamKey,
}

impl Ctx<'_> {
    fn refine(&self) -> Option<RefinePolicy> {
        self.cfg.grid.refine.then(RefinePolicy::default)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let ctx = Ctx {
        cfg,
        key: StreamKey::new(cfg.seed),
    };
    match cfg.experiment {
        ExperimentId::HittingLaw => hitting_law::run(&ctx),
        ExperimentId::Dichotomy => dichotomy::run(&ctx),
        ExperimentId::Counterexample => counterexample::run(&ctx),
        ExperimentId::Dudley => dudley::run(&ctx),
        ExperimentId::Universal => universal::run(&ctx),
        ExperimentId::Isometry => isometry::run(&ctx),
        ExperimentId::Doob => doob::run(&ctx),
    }
}
