use std::path::PathBuf;

use crate::tensor_file::TensorFileError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("token {token} out of range for a codebook of {size} entries")]
    TokenOutOfRange { token: u32, size: usize },

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("frozen parameter {0} changed")]
    FrozenParameterChanged(String),

    #[error("tensor file {path}: {source}")]
    TensorFile {
        path: PathBuf,
        #[source]
        source: TensorFileError,
    },

    #[error(transparent)]
    Candle(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
