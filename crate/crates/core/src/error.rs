use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("simplex needs at least 2 components, got {0}")]
    TooFewOutcomes(usize),

    #[error("not a simplex point: {0}")]
    NotSimplex(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("simplex point underflowed to the boundary (component below 1e-300)")]
    Underflow,

    #[error(
        "Kraus set is incomplete: ||sum M^dag M - I||_F = {residual:.3e} exceeds {tolerance:.0e}"
    )]
    Incomplete { residual: f64, tolerance: f64 },

    #[error("operator set is not projective: {0}")]
    NotProjective(String),

    #[error("operator set must be positive and commuting for this operation")]
    NotPositiveCommuting,

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("matrix has a negative eigenvalue {eigenvalue:.3e}")]
    NegativeEigenvalue { eigenvalue: f64 },

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("outcome is impossible: probability {probability:.3e} at or below 1e-14")]
    OutcomeImpossible { probability: f64 },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
