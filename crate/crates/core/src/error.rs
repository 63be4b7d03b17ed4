use thiserror::Error;

/// Errors produced by the precoding and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Channel is degenerate for the requested operation (all-zero taps,
    /// rank-deficient Toeplitz matrix, linearly dependent channel set, ...).
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A certified property failed (rank certificate, leakage bound, KKT
    /// residual). Never downgraded to a silent fallback.
    #[error("property violation: {0}")]
    PropertyViolation(String),

    /// LAPACK failure or non-finite intermediate.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Numerical(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
