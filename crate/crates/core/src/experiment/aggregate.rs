//! Counting profiles across games and rounds.

use serde::{Deserialize, Serialize};

use crate::egt::STATES;
use crate::game::{enumerate_profiles, ActionProfile, TrustMode};
use crate::harness::transcript::GameTranscript;
use crate::harness::GameSpec;

use super::config::Treatment;
use super::ExperimentError;

/// Identifies one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub mode: TrustMode,
    pub epsilon: f64,
    pub c_r: f64,
    pub b_fo: f64,
    pub treatment: Treatment,
}

impl CellKey {
    /// Recovers the cell a game belongs to from its spec.
    pub fn from_spec(spec: &GameSpec) -> Self {
        let personalities: Vec<_> = spec.agents.iter().filter_map(|a| a.personality).collect();
        let treatment = match personalities.as_slice() {
            [p] => Treatment::Single(*p),
            _ => Treatment::Control,
        };
        CellKey {
            mode: spec.mode,
            epsilon: spec.params.epsilon,
            c_r: spec.params.c_r,
            b_fo: spec.params.b_fo,
            treatment,
        }
    }

    /// Panel grouping used by the charts: everything but `b_fo`.
    pub fn panel(&self) -> (TrustMode, u64, u64, Treatment) {
        (
            self.mode,
            self.epsilon.to_bits(),
            self.c_r.to_bits(),
            self.treatment,
        )
    }
}

/// Frequencies of user trust, developer compliance and regulator
/// enforcement at one round, over valid games.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMarginal {
    pub round: u32,
    pub user_trust: f64,
    pub developer_comply: f64,
    pub regulator_comply: f64,
}

/// Round-level aggregate over a set of transcripts sharing a round count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAggregate {
    pub rounds: u32,
    pub valid_games: u32,
    pub invalid_games: u32,
    /// Joint profile counts per round, table order.
    pub per_round_counts: Vec<[u64; STATES]>,
    pub per_round_marginals: Vec<RoundMarginal>,
    /// Profile frequencies averaged over rounds; `None` without valid games.
    pub profile_frequencies: Option<[f64; STATES]>,
}

/// Per-round marginals and over-round average profile frequencies.
///
/// Invalid transcripts are counted but contribute no profiles.
pub fn aggregate_rounds(transcripts: &[GameTranscript]) -> Result<RoundAggregate, ExperimentError> {
    let rounds = transcripts.first().map_or(0, |t| t.spec.rounds);
    if let Some(t) = transcripts.iter().find(|t| t.spec.rounds != rounds) {
        return Err(ExperimentError::MixedRounds {
            expected: rounds,
            found: t.spec.rounds,
            game_id: t.game_id.clone(),
        });
    }
    let mut counts = vec![[0u64; STATES]; rounds as usize];
    let mut valid = 0u32;
    let mut invalid = 0u32;
    for t in transcripts {
        if !t.valid || t.rounds.len() != rounds as usize {
            invalid += 1;
            continue;
        }
        valid += 1;
        for (slot, record) in counts.iter_mut().zip(&t.rounds) {
            slot[record.profile.index()] += 1;
        }
    }

    let (marginals, frequencies) = if valid == 0 {
        (Vec::new(), None)
    } else {
        let n = f64::from(valid);
        let marginals = counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let sum_where = |f: fn(&ActionProfile) -> bool| -> u64 {
                    enumerate_profiles(TrustMode::Conditional)
                        .iter()
                        .filter(|p| f(p))
                        .map(|p| c[p.index()])
                        .sum()
                };
                RoundMarginal {
                    round: i as u32 + 1,
                    user_trust: sum_where(|p| p.user_trusts) as f64 / n,
                    developer_comply: sum_where(|p| p.developer_complies) as f64 / n,
                    regulator_comply: sum_where(|p| p.regulator_complies) as f64 / n,
                }
            })
            .collect();
        let total = n * f64::from(rounds);
        let mut freq = [0.0; STATES];
        for (k, f) in freq.iter_mut().enumerate() {
            *f = counts.iter().map(|c| c[k]).sum::<u64>() as f64 / total;
        }
        (marginals, Some(freq))
    };

    Ok(RoundAggregate {
        rounds,
        valid_games: valid,
        invalid_games: invalid,
        per_round_counts: counts,
        per_round_marginals: marginals,
        profile_frequencies: frequencies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub valid_games: u32,
    pub invalid_games: u32,
    /// `None` marks a degenerate cell (no valid games).
    pub profile_frequencies: Option<[f64; STATES]>,
    pub per_round_marginals: Vec<RoundMarginal>,
    pub per_round_counts: Vec<[u64; STATES]>,
}

impl CellResult {
    pub fn is_degenerate(&self) -> bool {
        self.profile_frequencies.is_none()
    }

    pub fn frequency(&self, profile: ActionProfile) -> Option<f64> {
        self.profile_frequencies.map(|f| f[profile.index()])
    }

    pub fn from_transcripts(
        key: CellKey,
        transcripts: &[GameTranscript],
    ) -> Result<Self, ExperimentError> {
        let agg = aggregate_rounds(transcripts)?;
        Ok(CellResult {
            key,
            valid_games: agg.valid_games,
            invalid_games: agg.invalid_games,
            profile_frequencies: agg.profile_frequencies,
            per_round_marginals: agg.per_round_marginals,
            per_round_counts: agg.per_round_counts,
        })
    }
}

/// Groups transcripts by cell (first-appearance order) and aggregates each.
pub fn aggregate_cells(transcripts: &[GameTranscript]) -> Result<Vec<CellResult>, ExperimentError> {
    let mut groups: Vec<(CellKey, Vec<GameTranscript>)> = Vec::new();
    for t in transcripts {
        let key = CellKey::from_spec(&t.spec);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(t.clone()),
            None => groups.push((key, vec![t.clone()])),
        }
    }
    groups
        .into_iter()
        .map(|(key, ts)| CellResult::from_transcripts(key, &ts))
        .collect()
}
