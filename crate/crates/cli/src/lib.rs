//! Orchestration of the identification experiment: configuration, the
//! subcommands, CSV/PGM output and the run manifest.

pub mod commands;
pub mod config;
pub mod files;
pub mod manifest;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or flags (exit code 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical or stage failure (exit code 1).
    #[error(transparent)]
    Core(#[from] microscale_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("malformed input {path}: {reason}")]
    Input { path: String, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}
