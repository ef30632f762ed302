use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The closed-form moment bound does not apply to the requested step.
    #[error("moment bound not applicable: {0}")]
    Validity(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    /// No noise level in the search bracket meets the requested budget.
    #[error("infeasible privacy budget: {0}")]
    InfeasibleBudget(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample set")]
    EmptySet,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at line {line}: expected {expected} columns, found {found}")]
    Schema {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
