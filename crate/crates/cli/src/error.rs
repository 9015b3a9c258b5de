use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

/// Failure of a command, carrying its process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Gradcheck(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// 1 I/O, 2 configuration, 3 data, 4 numeric failure, 5 incompatible
    /// checkpoint, 6 gradient check failure.
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Checkpoint(_) => 5,
            CliError::Gradcheck(_) => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Gradcheck(_) => "gradcheck",
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl From<lightcon::Error> for CliError {
    fn from(err: lightcon::Error) -> Self {
        use lightcon::Error as E;
        let msg = err.to_string();
        match err {
            E::Io(_) => CliError::Io(msg),
            E::InvalidConfig(_)
            | E::InvalidTemperature(_)
            | E::InvalidWeights(_)
            | E::KTooLarge { .. }
            | E::BatchTooLarge { .. } => CliError::Config(msg),
            E::NumericFailure { .. } | E::NonFinite(_) | E::ZeroVector | E::NotUnitNorm { .. } => {
                CliError::Numeric(msg)
            }
            E::IncompatibleCheckpoint(_) => CliError::Checkpoint(msg),
            _ => CliError::Data(msg),
        }
    }
}
