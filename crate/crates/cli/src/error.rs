use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration could not be parsed or failed validation.
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] renewal_core::Error),
}

impl CliError {
    /// Process exit status for the error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
            Self::Model(renewal_core::Error::Config(_)) => 2,
            Self::Model(_) => 4,
        }
    }
}
