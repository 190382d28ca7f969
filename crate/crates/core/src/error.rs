use thiserror::Error;

use crate::tape::TapeError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid physical state: {0}")]
    Physical(String),
    #[error("numerical blow-up: {0}")]
    Blowup(String),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error: 2 for configuration and input
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Physical(_) | Error::Blowup(_) | Error::Tape(_) => 3,
            Error::Config(_) | Error::Shape(_) | Error::Checkpoint(_) | Error::Io(_) => 2,
        }
    }
}
