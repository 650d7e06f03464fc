use std::path::PathBuf;

use thiserror::Error;

/// Failure of a run, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] verspace::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use verspace::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Output { .. } => 3,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::DimensionMismatch { .. } => 2,
                E::Idx(_) | E::Data(_) | E::Io { .. } => 3,
                E::Infeasible(_) => 4,
                E::NumericalAbort(_) => 5,
            },
        }
    }
}
