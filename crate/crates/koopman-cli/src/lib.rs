//! Command-line front end for the Koopman spectral analysis library.
//!
//! A run is described by a flat key-value [`config::RunConfig`], executed by
//! [`pipeline::run`] as a fixed stage sequence (simulate, assemble, analyze,
//! report), and summarized in a deterministic [`pipeline::RunReport`]. All
//! numeric results land in CSV files; SVG plots are presentation-only views
//! that carry a provenance comment naming their source CSV.

pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod plot;

pub use config::RunConfig;
pub use pipeline::{run, run_until, RunReport, StageTiming, StopAfter};

use thiserror::Error;

/// Errors surfaced by the CLI layer.
///
/// `Config` covers everything wrong with the run description itself,
/// including referenced files that are missing or unreadable at parse time.
/// `Stage` wraps a library error with the name of the pipeline stage that
/// raised it; `StageIo` does the same for filesystem failures during a run.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        source: koopman::Error,
    },
    #[error("stage {stage} failed: {message}")]
    StageIo {
        stage: &'static str,
        message: String,
    },
}

impl CliError {
    /// Process exit code: 2 for configuration errors, 3 for run failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
