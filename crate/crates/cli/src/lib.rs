//! Library surface of the `hykge` binary: configuration, provider wiring,
//! state loading, and the HTTP service, shared between the CLI entry point
//! and the integration tests.

pub mod config;
pub mod providers;
pub mod service;
pub mod state;

use hykge_core::kg::KgError;
use hykge_core::linker::LinkerError;
use hykge_core::pipeline::PipelineError;

/// Errors carry the process exit code: 2 for I/O and format problems,
/// 3 for provider/stage failures, 1 otherwise.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn format(message: impl Into<String>) -> Self {
        CliError::new(2, message)
    }

    pub fn provider(message: impl Into<String>) -> Self {
        CliError::new(3, message)
    }

    pub fn other(message: impl Into<String>) -> Self {
        CliError::new(1, message)
    }
}

impl From<KgError> for CliError {
    fn from(e: KgError) -> Self {
        CliError::format(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e.stage_name() {
            Some(_) => CliError::provider(e.to_string()),
            None => CliError::format(e.to_string()),
        }
    }
}

impl From<LinkerError> for CliError {
    fn from(e: LinkerError) -> Self {
        match e {
            LinkerError::Provider(_) => CliError::provider(e.to_string()),
            other => CliError::format(other.to_string()),
        }
    }
}
