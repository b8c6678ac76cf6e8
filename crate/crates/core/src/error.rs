use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmmError {
    #[error("matrix of dimension {n} is not positive definite even with jitter {jitter_max:e}")]
    NotPositiveDefinite { n: usize, jitter_max: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no closed form for operator pair ({left}, {right}) under this kernel")]
    UnsupportedOperatorPair { left: String, right: String },

    #[error("design point set is empty")]
    EmptyDesign,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("nonlinear solve failed: {0}")]
    SolveFailed(String),

    #[error("solution index {index} out of range ({available} solutions available)")]
    SolutionIndexOutOfRange { index: usize, available: usize },

    #[error("every grid point has zero posterior mass")]
    AllZeroMass,

    #[error("every importance weight is degenerate")]
    AllWeightsDegenerate,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, PmmError>;
