use thiserror::Error;

/// Errors raised by model validation, simulation and numerics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model or experiment parameter is out of its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A caller broke an operation's precondition (e.g. too little history).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A numerical routine could not reach the requested accuracy.
    #[error("numerical failure: {message} (achieved error {achieved:e})")]
    Numeric { message: String, achieved: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
