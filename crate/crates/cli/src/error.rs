use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] pbi_core::Error),
    #[error(transparent)]
    Clap(#[from] clap::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for usage errors, 3 for data errors, 1 for
    /// output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(pbi_core::Error::InvalidArgument(_)) | CliError::Core(pbi_core::Error::QuantileLevel(_)) => 2,
            CliError::Data(_) | CliError::Core(_) => 3,
            CliError::Io { .. } => 1,
            CliError::Clap(e) => e.exit_code(),
        }
    }
}
