use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_parameter(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
