use thiserror::Error;

use dpsf::dp::TrainError;
use dpsf::experiment::ExperimentError;
use dpsf::fdtd::FdtdError;
use dpsf::io::IoError;
use dpsf::oracle::OracleError;

/// Process exit status for a failed command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Numerical = 1,
    User = 2,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing input {0}")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    File(#[from] IoError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fdtd(#[from] FdtdError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn exit_kind(&self) -> ExitKind {
        match self {
            CliError::Train(e) if e.is_numerical() => ExitKind::Numerical,
            _ => ExitKind::User,
        }
    }
}
