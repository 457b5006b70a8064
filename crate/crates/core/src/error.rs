use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("{what} out of domain: {value}")]
    OutOfDomain { what: &'static str, value: f64 },
    #[error("level {level}: measured error {measured:.3e} exceeds budget {budget:.3e}")]
    BudgetUnmet {
        level: usize,
        measured: f64,
        budget: f64,
    },
    #[error("clock value {clock_value:.3e} exceeds configured cap {cap:.3e}")]
    CapExceeded { clock_value: f64, cap: f64 },
    #[error("only {count} exceedances over threshold {threshold} (need {required})")]
    TooFewExceedances {
        threshold: f64,
        count: usize,
        required: usize,
    },
    #[error("integrand {value:.3e} at cell {index} is below the floor {floor:.3e}")]
    BelowFloor { index: usize, value: f64, floor: f64 },
    #[error("measured p-th moment is not finite")]
    InfiniteMoment,
    #[error("unsupported: {0}")]
    Unsupported(String),
}
