use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the pipeline. Row-level problems are never errors: they
/// are quarantined and counted by the ingest layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: header is missing required column {column}")]
    MissingColumn { path: PathBuf, column: &'static str },

    #[error("{path}: {message}")]
    BadHeader { path: PathBuf, message: String },

    #[error("field {0} is not declared in the code book")]
    UndeclaredField(String),

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
