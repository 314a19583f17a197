use std::path::PathBuf;

use mol::MolError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot load checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: MolError,
    },

    #[error(transparent)]
    Core(#[from] MolError),

    #[error("all {0} reconstructions failed")]
    AllFailed(usize),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Checkpoint { .. } => 2,
            CliError::Core(e) => match e {
                MolError::Solver { .. }
                | MolError::Numeric { .. }
                | MolError::BackwardNonConvergence { .. }
                | MolError::AllBatchesDiverged { .. } => 3,
                MolError::Dimension(_) | MolError::Parameter(_) | MolError::Format { .. } | MolError::Io(_) => 2,
            },
            CliError::AllFailed(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}
