//! Configuration-driven pipeline: simulate, select, infer, diagnose.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{diagnose, infer, select, simulate, Context, DiagnoseOptions, InferOptions, SelectOptions};
pub use config::RunConfig;
pub use manifest::RunManifest;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] seirsl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Core(seirsl_core::Error::Io { .. }) => EXIT_IO,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_USAGE,
        }
    }
}
