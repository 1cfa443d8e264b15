//! Pipeline front end for the ssf-core engine: stage orchestration,
//! artifact layout, and the exit-code contract used by the `ssf`
//! binary.

pub mod config;
pub mod pipeline;

use thiserror::Error;

/// Errors surfaced to the command line, each mapping to a documented
/// exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, malformed input data, or a contract violation.
    #[error("{0}")]
    Validation(String),
    /// A stage was asked to run before its upstream stage produced the
    /// artifact it reads.
    #[error("missing upstream artifact {artifact}; run {producer} first")]
    MissingUpstream { artifact: String, producer: String },
    /// The text or embedding backend failed.
    #[error("backend failure: {0}")]
    Backend(String),
}

impl CliError {
    /// Exit code for this error: 2 validation, 3 missing upstream
    /// artifact, 4 backend failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::MissingUpstream { .. } => 3,
            CliError::Backend(_) => 4,
        }
    }
}
