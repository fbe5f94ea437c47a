use std::path::PathBuf;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const NOT_CONVERGED: u8 = 2;
    pub const INVALID_CONFIG: u8 = 3;
    pub const VERIFICATION_FAILED: u8 = 4;
    /// Unexpected IO failure while writing outputs.
    pub const IO: u8 = 1;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] volgeo_core::Error),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Write { .. } | CliError::Csv(_) => exit::IO,
            _ => exit::INVALID_CONFIG,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
