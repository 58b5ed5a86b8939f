use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("diverged at step {step} in layer `{layer}`: non-finite {what}")]
    Divergence {
        layer: String,
        step: u64,
        what: &'static str,
    },

    #[error("format error in {source_name} at {location}: {message}")]
    Format {
        source_name: String,
        location: String,
        message: String,
    },

    #[error("invariant violated at step {step}, layer `{layer}`: {message}")]
    Invariant { layer: String, step: u64, message: String },

    #[error("out-of-order step: expected {expected}, got {got}")]
    Sequence { expected: u64, got: u64 },

    #[error("audit failed: {}", .0.join("; "))]
    Audit(Vec<String>),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Argument(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Audit(_) | Error::Invariant { .. } => 4,
            _ => 1,
        }
    }
}
