//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two grids or tensors that must agree in shape do not.
    #[error("shape mismatch: expected {expected:?}, got {got:?} ({context})")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    /// A file could not be decoded; `offset` is the byte position of the
    /// first inconsistency.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Header and payload disagree (truncation, size mismatch).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Input is degenerate for the requested operation (constant volume,
    /// empty region, featureless pair).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A network produced or received non-finite values.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// Training diverged; the returned state holds the last good params.
    #[error("training aborted at step {step}: {message}")]
    TrainingAborted { step: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(expected: &[usize], got: &[usize], context: &str) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            got: got.to_vec(),
            context: context.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
