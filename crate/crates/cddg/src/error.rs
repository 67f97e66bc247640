use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or spec parameters (maps to exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// Unknown name supplied by the caller (domain, variant, ...).
    #[error("unknown {kind}: {name}")]
    UnknownName { kind: &'static str, name: String },

    /// Tensor/matrix dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A label or index fell outside its declared range.
    #[error("range error: {0}")]
    Range(String),

    /// A caller-facing precondition was violated (non-unit rows, bad temperature, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Dataset ingestion failure, carries the offending path.
    #[error("ingestion error at {path}: {msg}")]
    Ingest { path: PathBuf, msg: String },

    /// Checkpoint file rejected (bad magic, version, or config hash mismatch).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    /// Degenerate probe data (e.g. a single label value in the fit split).
    #[error("probe error: {0}")]
    Probe(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/config problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownName { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
