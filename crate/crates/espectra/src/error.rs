use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by what the caller can do about them: `InvalidSpec`
/// and `Dimension` are caller mistakes, `Numerical` and `Backend` are solver
/// breakdowns, the rest are I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear algebra backend: {0}")]
    Backend(#[from] ndarray_linalg::error::LinalgError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed input file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    fn invalid_spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }
}

/// Shorthand used throughout the crate for precondition checks.
pub(crate) fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid_spec(msg))
    }
}
