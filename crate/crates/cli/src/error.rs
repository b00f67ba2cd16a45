use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_COMPUTATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|m| format!("  - {m}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),

    #[error("{0}")]
    Core(#[from] lendsim::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use lendsim::Error as E;
        match self {
            CliError::Validation(_) | CliError::Config { .. } => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::InvalidInput(_)
                | E::MissingColumn { .. }
                | E::Parse { .. }
                | E::EmptyAfterFilter { .. }
                | E::UnknownGroup(_) => EXIT_VALIDATION,
                E::Io(_) | E::Csv(_) | E::Json(_) => EXIT_IO,
                _ => EXIT_COMPUTATION,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
