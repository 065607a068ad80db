use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents that do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity showed up where a finite value is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed file header or unknown magic.
    #[error("format error: {0}")]
    Format(String),

    /// Payload shorter or longer than the header promises.
    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// Training produced a non-finite loss; carries the offending step's inputs.
    #[error(
        "non-finite loss at step {step}: sdm={sdm_loss} indicator={indicator_loss} t={timesteps:?}"
    )]
    NonFiniteLoss {
        step: usize,
        sdm_loss: f64,
        indicator_loss: f64,
        timesteps: Vec<usize>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
