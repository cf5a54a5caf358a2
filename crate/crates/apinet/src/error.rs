//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor math, model construction, training, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors had incompatible shapes for the attempted operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A configuration value or combination is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A binary file failed to parse; `offset` is the byte position of the failure.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A config file failed to parse; `line` is 1-based.
    #[error("config error at line {line}: {message}")]
    ConfigFile { line: usize, message: String },

    /// A numeric value became non-finite where finiteness is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
