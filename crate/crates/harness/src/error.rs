use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },
    #[error("no experiment configs in {0}")]
    EmptySuite(String),
    #[error(transparent)]
    Core(#[from] stochrep_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 for input problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::EmptySuite(_) => 2,
            _ => 1,
        }
    }
}
