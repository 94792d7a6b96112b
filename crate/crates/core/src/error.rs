use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("index {index} out of range for genus {genus}")]
    Index { index: usize, genus: usize },
    #[error("point {0} lies inside a Schottky disc")]
    InsideDisc(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("series diagnostic failed: {0}")]
    Series(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Index { .. } | Error::Config(_) | Error::InsideDisc(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
