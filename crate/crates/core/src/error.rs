use thiserror::Error;

/// Errors produced by the segmentation, estimation and training routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OsgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero-norm feature vector at shot {shot}")]
    ZeroVector { shot: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid scene labels at shot {index}: {reason}")]
    InvalidLabels { index: usize, reason: String },

    #[error("group count {k} out of range [1, {n}]")]
    GroupCountOutOfRange { k: usize, n: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("instance too large for exhaustive search ({count} divisions); use the DP solver")]
    TooLarge { count: u128 },

    #[error("no annotated division: ground truth has a single scene")]
    NoAnnotatedDivision,

    #[error("eigensolver did not converge after {iterations} iterations (off-diagonal norm {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("could not place {k} cluster centers in dimension {dim} after {attempts} attempts; try a larger dimension")]
    SamplingFailed { k: usize, dim: usize, attempts: usize },

    #[error("every video in the corpus was skipped as degenerate")]
    DegenerateCorpus,
}

pub type Result<T> = std::result::Result<T, OsgError>;
