use thiserror::Error;

/// Failures mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// A solver failed to converge (exit 3).
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
    /// Output could not be written (exit 1).
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<qprobe::Error> for CliError {
    fn from(e: qprobe::Error) -> Self {
        match e {
            qprobe::Error::NonConvergence(_) => CliError::NonConvergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}
