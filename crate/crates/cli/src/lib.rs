//! Stage runners behind the `inferkg` binary.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

use std::fmt;
use std::path::Path;

pub use config::{ConfigError, PipelineConfig};
pub use manifest::Manifest;
pub use pipeline::{run_pipeline, PipelineSummary};

/// A command failure and the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, bad configuration or a missing input: exit 2.
    Usage(anyhow::Error),
    /// A stage ran and failed: exit 1.
    Stage { stage: &'static str, error: anyhow::Error },
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(error.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Stage { .. } => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "error: {e:#}"),
            Failure::Stage { stage, error } => write!(f, "stage `{stage}` failed: {error:#}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e)
    }
}

/// Attaches a stage name to any error.
pub trait InStage<T> {
    fn in_stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InStage<T> for Result<T, E> {
    fn in_stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Stage { stage, error: e.into() })
    }
}

/// Missing inputs are usage errors naming the path.
pub fn require_input(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::usage(anyhow::anyhow!("input not found: {}", path.display())))
    }
}
