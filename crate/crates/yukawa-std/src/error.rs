use std::process::ExitCode;

/// Failures of a command, each mapped to a process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("blow-up at t = {time} before the first output time {first_output}")]
    EarlyBlowUp { time: f64, first_output: f64 },
    #[error(transparent)]
    Core(#[from] yukawa_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// `1` invariant failure, `2` configuration error, `3` blow-up before output.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::EarlyBlowUp { .. } => 3,
            CliError::Core(yukawa_core::Error::Parameter(_) | yukawa_core::Error::Grid(_)) => 2,
            _ => 1,
        }
    }
}

impl From<&CliError> for ExitCode {
    fn from(e: &CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
