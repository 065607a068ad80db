use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ddm_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Malformed sweep CSV; `row` counts data rows from 1.
    #[error("sweep csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("png: {0}")]
    Png(String),

    /// Inputs that do not fit together, e.g. sample dumps for the wrong scenario.
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
