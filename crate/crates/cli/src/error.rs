use thiserror::Error;

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const VERIFICATION: u8 = 3;
    pub const TRAINING: u8 = 4;
    pub const IO: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Verification(_) => exit::VERIFICATION,
            CliError::Training(_) => exit::TRAINING,
            CliError::Io(_) => exit::IO,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl From<pld_core::Error> for CliError {
    fn from(e: pld_core::Error) -> Self {
        use pld_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::SizeLimit { .. } => CliError::Usage(e.to_string()),
            E::TrainingFailure { .. } => CliError::Training(e.to_string()),
            E::Construction(_) => CliError::Internal(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
