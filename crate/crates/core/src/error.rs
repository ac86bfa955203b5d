use thiserror::Error;

/// Errors raised by the estimators, generators and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate eigen-gap: the bound is undefined when delta_d = 0")]
    DegenerateGap,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the caller's parameters rather than the data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::Unsupported(_) | Error::DegenerateGap
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
