use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An invalid or inconsistent configuration value. `key` names the offending field.
    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("registry: {0}")]
    Registry(String),

    /// A tensor shape or value violated a documented contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("geometry: {0}")]
    Geometry(String),

    /// The cost model met operations it has no rule for.
    #[error("cost model has no rule for: {}", .0.join(", "))]
    Coverage(Vec<String>),

    #[error("perturbation requires trajectory provenance: {0}")]
    Provenance(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr}): {loss}")]
    NonFinite { epoch: usize, batch: usize, lr: f64, loss: f64 },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }

    /// Whether the error stems from user input (exit code 1) rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Registry(_) | Error::Geometry(_))
    }
}
