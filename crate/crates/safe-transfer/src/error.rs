use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("matrix is not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("rejection sampling gave up after {attempts} attempts; most frequent failure: {reason}")]
    Rejection { attempts: usize, reason: String },
    #[error("no exploration bound: {0}")]
    NoBound(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
