use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("weights and values have different lengths ({weights} vs {values})")]
    LengthMismatch { weights: usize, values: usize },
    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("no outcome with positive weight")]
    Empty,
    #[error("{what}: value {value} out of range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("query budget exhausted ({count} used, budget {budget}, requested {requested})")]
    BudgetExhausted { count: u64, budget: u64, requested: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state is not unit norm (norm² = {0})")]
    NotUnit(f64),
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("root finder failure: {0}")]
    RootFinder(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance error: {0}")]
    Instance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
