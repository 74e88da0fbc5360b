//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of matrices or vectors do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A caller-side contract was violated (e.g. an asymmetric matrix passed
    /// to a symmetric solve).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A factorization or solver could not produce a usable result even
    /// after regularization.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// The trajectory distribution could not be formed.
    #[error("distribution failure: {0}")]
    Distribution(String),

    /// An invalid covariance matrix was supplied.
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    /// Configuration file or parameter errors.
    #[error("config error: {0}")]
    Config(String),

    /// Controller-level failure wrapping an inner solver diagnostic.
    #[error("controller error at step {step}: {source}")]
    Controller {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dimension(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
