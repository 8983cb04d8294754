use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the fall-detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its allowed range.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Input data violates a precondition (empty channel, length mismatch, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in tensor `{tensor}`")]
    Numeric { tensor: String },

    #[error("cannot stratify: {0}")]
    Stratification(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("model dimension error: {0}")]
    Dimension(String),

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
