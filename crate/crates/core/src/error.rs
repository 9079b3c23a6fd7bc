use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors from ingestion: missing columns, bad cells, unknown classes.
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: column {column:?}: cannot parse {value:?} as a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: column {column:?}: value {value} is not finite")]
    NonFinite {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}: unknown irradiation type {value:?}")]
    UnknownClass { row: usize, value: String },
    #[error("row {row}: {source}")]
    Csv {
        row: usize,
        #[source]
        source: csv::Error,
    },
    #[error("expected {expected} feature columns, got {got}")]
    Width { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(#[from] SchemaError),

    #[error("config error: {0}")]
    Config(String),

    /// The operation is valid but the artifact is not in the right state,
    /// e.g. predicting with an uncalibrated model.
    #[error("state error: {0}")]
    State(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) => 2,
            Error::Config(_) | Error::Domain(_) => 3,
            Error::State(_) => 4,
            Error::Io { .. } | Error::Json { .. } | Error::Csv(_) => 1,
        }
    }
}
