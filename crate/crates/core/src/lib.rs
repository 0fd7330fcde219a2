//! Three-population trust game between users, AI developers and regulators:
//! payoffs and equilibria, a finite-population evolutionary baseline, a
//! harness for LLM-played games, and a sweep runner.

pub mod egt;
pub mod experiment;
pub mod game;
pub mod harness;

pub use egt::{analyze, EgtConfig, EgtError, StationaryResult};
pub use experiment::{CellResult, ExperimentConfig, ExperimentError};
pub use game::{
    enumerate_profiles, find_pure_nash, payoff, payoff_table, Action, ActionProfile, GameError,
    GameParams, PayoffTriple, Role, TrustMode,
};
pub use harness::transcript::GameTranscript;
pub use harness::{play_game, GameRun, GameSpec, HarnessError, Personality};
