use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] imle_complete::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 0 success, 1 usage/config, 2 numerical abort, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        use imle_complete::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } => 3,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(E::Io(_) | E::Parse { .. } | E::Checkpoint(_)) => 3,
            CliError::Core(_) => 1,
        }
    }
}
