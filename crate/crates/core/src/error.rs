use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A hyperparameter or run setting is out of its valid range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Data handed to an operation violates its domain (bad label, non-finite logit, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A caller broke an API contract (non-scalar loss, missing gradient, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// A file could not be decoded.
    #[error("format error at byte {offset} of {source_name}: {message}")]
    Format {
        source_name: String,
        offset: u64,
        message: String,
    },

    /// A text record (CSV line, config line) could not be decoded.
    #[error("format error in {source_name}, record {record}: {message}")]
    Record {
        source_name: String,
        record: usize,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Training produced a non-finite loss.
    #[error("numerical divergence at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(source_name: impl Into<String>, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            source_name: source_name.into(),
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn record(source_name: impl Into<String>, record: usize, msg: impl Into<String>) -> Self {
        Error::Record {
            source_name: source_name.into(),
            record,
            message: msg.into(),
        }
    }
}
