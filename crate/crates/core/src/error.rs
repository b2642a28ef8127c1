use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// SMO ran out of its iteration budget. The diagnostics describe the
    /// best iterate reached so the caller can decide whether to retry with
    /// a larger budget or a looser tolerance.
    #[error("training did not converge: {0}")]
    Training(TrainingDiagnostics),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("usage error: {0}")]
    Usage(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDiagnostics {
    pub iterations: u64,
    pub kkt_gap: f64,
    pub objective: f64,
    pub c: f64,
    pub gamma: f64,
}

impl std::fmt::Display for TrainingDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "iterations={} kkt_gap={:e} objective={} c={} gamma={}",
            self.iterations, self.kkt_gap, self.objective, self.c, self.gamma
        )
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
