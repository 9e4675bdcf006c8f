use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),
    /// A standing assumption of the method is violated (κ bound, rate branch, summability).
    #[error("admissibility error: {0}")]
    Admissibility(String),
    /// Something went wrong numerically at run time.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("division by zero polynomial")]
    DivisionByZero,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Admissibility(_) => 3,
            Error::Numerical(_) | Error::DivisionByZero => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn admissibility<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Admissibility(msg.into()))
}

pub(crate) fn numerical<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Numerical(msg.into()))
}
