//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or incompatible shapes supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data file could not be parsed. Offset is the byte position of the
    /// offending record.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// An artifact file is corrupt, truncated, or has the wrong magic,
    /// version, or checksum.
    #[error("invalid artifact: {0}")]
    InvalidArtifact(String),

    /// Artifacts passed to one command were produced by incompatible runs
    /// (mismatched bit width, dimension, or model hash).
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// A feature row with zero norm cannot be l2-normalized.
    #[error("cannot l2-normalize row {row}: zero norm")]
    ZeroRow { row: usize },

    /// Training diverged (a loss became non-finite).
    #[error("training aborted in phase {phase} at iteration {iteration}: {message}")]
    Training {
        phase: usize,
        iteration: u64,
        message: String,
    },

    /// Forward/backward bookkeeping mismatch; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
