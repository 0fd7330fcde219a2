//! Shared fixtures for the benchmarks.

use govtrust_core::harness::BackendConfig;
use govtrust_core::{EgtConfig, ExperimentConfig, GameParams, TrustMode};

/// EGT configuration at the default parameters.
pub fn egt_config(mode: TrustMode, population: u32) -> EgtConfig {
    EgtConfig {
        population,
        beta: 1.0,
        mode,
        params: GameParams::default(),
    }
}

/// A full default sweep played by a seeded scripted backend.
pub fn scripted_sweep(replications: u32, rounds: u32) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(BackendConfig::scripted_random(11));
    c.game.replications = replications;
    c.game.rounds = rounds;
    c.parallelism = 1;
    c
}
