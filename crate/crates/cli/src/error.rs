use pinet_core::Error;

/// Failure of a subcommand, carrying its stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonFiniteLoss(String),
    #[error("{0}")]
    JointMismatch(String),
    #[error("{0}")]
    CountMismatch(String),
    #[error("{0}")]
    GradCheck(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::NonFiniteLoss(_) => 4,
            CliError::JointMismatch(_) => 5,
            CliError::CountMismatch(_) => 6,
            CliError::GradCheck(_) => 7,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidConfig(_) => CliError::Config(msg),
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::Checkpoint(_) => CliError::Io(msg),
            Error::NonFiniteLoss { .. } => CliError::NonFiniteLoss(msg),
            Error::JointCount { .. } => CliError::JointMismatch(msg),
            _ => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
