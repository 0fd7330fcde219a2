//! Parameter sweeps over LLM-played games, aggregation and reporting.

pub mod aggregate;
pub mod config;
pub mod report;
pub mod runner;

use thiserror::Error;

use crate::harness::backend::BackendError;
use crate::harness::prompt::TemplateError;
use crate::harness::transcript::TranscriptError;
use crate::harness::HarnessError;

pub use aggregate::{
    aggregate_cells, aggregate_rounds, CellKey, CellResult, RoundAggregate, RoundMarginal,
};
pub use config::{ExperimentConfig, PersonalityTreatment, Treatment};
pub use runner::{
    dry_run, persist, replay, run_experiment, run_personality_ablation, ExperimentOutput,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("transcript {game_id} has {found} rounds, expected {expected}")]
    MixedRounds {
        expected: u32,
        found: u32,
        game_id: String,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report: {0}")]
    Report(String),
}
