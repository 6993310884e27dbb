use std::path::PathBuf;

use thiserror::Error;

use crate::routing::ProblemKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size for {kind}: {detail}")]
    Size { kind: ProblemKind, detail: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("{operation} does not support problem kind {kind}")]
    UnsupportedKind {
        operation: &'static str,
        kind: ProblemKind,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("decode dead end at step {step}: every action is masked")]
    DecodeDeadEnd { step: usize },

    #[error("action {action} at step {step} violates the feasibility mask")]
    Masking { step: usize, action: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by NaN/Inf in the numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::DecodeDeadEnd { .. })
    }
}
