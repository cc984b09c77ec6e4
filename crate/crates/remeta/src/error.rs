//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite{}", .index.map(|i| format!(" (study {i})")).unwrap_or_default())]
    NonPositiveDefinite { index: Option<usize> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too few studies: need at least {min}, got {got}")]
    TooFewStudies { min: usize, got: usize },

    #[error("negative argument to density generator: {0}")]
    NegativeArgument(f64),

    #[error("unsupported generator: {0}")]
    UnsupportedGenerator(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid degrees of freedom: {0}")]
    InvalidDof(f64),

    #[error("quadrature did not converge within the node budget")]
    QuadratureNonConvergence,

    #[error("empty sample")]
    EmptySample,

    #[error("invalid beta: {0}")]
    InvalidBeta(String),
}

impl Error {
    pub(crate) fn non_pd() -> Self {
        Error::NonPositiveDefinite { index: None }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
