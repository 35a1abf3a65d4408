use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameter: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulation diverged at t = {time:.4} s (|value| = {magnitude:e})")]
    Divergence { time: f64, magnitude: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("operation requires a {expected} load, but the attached load is {got}")]
    WrongLoadKind { expected: &'static str, got: &'static str },

    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown joint `{name}` (valid joints: {valid})")]
    UnknownJoint { name: String, valid: String },

    #[error("training failed: {0}")]
    TrainingFailed(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
