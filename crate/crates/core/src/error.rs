use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by oracles, estimators, optimizers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A non-finite value (NaN or infinity) appeared.
    #[error("non-finite value in {context} at index {index}")]
    Numerical { context: String, index: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dim {
        context: String,
        expected: usize,
        got: usize,
    },

    /// An assumption-level contract was violated (spectrum, symmetry, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dim {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn numerical(context: impl Into<String>, index: usize) -> Self {
        Error::Numerical {
            context: context.into(),
            index,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}
