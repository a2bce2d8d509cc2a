use thiserror::Error;

/// Failures of a command, each with a stable process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Dataset(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::GradCheck(_) => 5,
            CliError::Checkpoint(_) => 6,
            CliError::Corrupt(_) => 7,
        }
    }

    /// Classify a library error raised while running a model: numeric
    /// failures keep their own code, everything else is a config problem.
    pub fn from_run(e: quatnet::Error) -> Self {
        match e {
            quatnet::Error::Numeric { .. } | quatnet::Error::NonFinite(_) => CliError::Numeric(e.to_string()),
            quatnet::Error::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
