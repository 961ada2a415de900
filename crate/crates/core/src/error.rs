//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the engine, trainers, and persistence layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an interface contract (shape mismatch, wrong
    /// architecture, off-curve point, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value appeared during numeric evaluation.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    /// Too many per-class trainings failed to converge for the corpus
    /// to be usable.
    #[error("corpus build failed: {failed} of {total} trainings did not converge")]
    TooManyFailures { failed: usize, total: usize },

    /// A split would leave one side empty.
    #[error("split leaves the {side} side empty")]
    EmptySplit { side: &'static str },

    /// Persisted file declares a schema this reader does not support.
    #[error("unsupported schema version {found} (reader supports {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    /// Persisted file failed its integrity check.
    #[error("checksum mismatch: file is corrupt or was edited by hand")]
    ChecksumMismatch,

    /// Persisted file is structurally broken.
    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
