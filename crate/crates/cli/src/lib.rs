//! Pipeline driver behind the `masklab` binary: configuration, stage
//! execution with provenance stamps, and the parameter sweep.

pub mod config;
pub mod pipeline;
pub mod provenance;
pub mod sweep;

use thiserror::Error;

pub use config::{RunConfig, SweepParam, SweepSpec};
pub use pipeline::{plan, run_pipeline, run_stage, Stage, StageArgs, StageOutcome};
pub use sweep::{run_sweep, SweepCell, SweepTable};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {msg}")]
    Stage { stage: &'static str, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }

    pub(crate) fn stage(stage: Stage, e: impl std::fmt::Display) -> Self {
        CliError::Stage { stage: stage.name(), msg: e.to_string() }
    }
}
