//! Game transcripts and their JSON-lines persistence.
//!
//! Each game is written as one `game` line ([`GameSpec`] snapshot, backend,
//! validity) followed by one `round` line per completed round. Every line
//! carries the schema tag [`TRANSCRIPT_SCHEMA`].

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Action, ActionProfile, PayoffTriple, Role};

use super::backend::BackendSnapshot;
use super::spec::GameSpec;

pub const TRANSCRIPT_SCHEMA: &str = "govtrust.transcript/1";

/// One agent's decision within a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub role: Role,
    /// Prompt as rendered from the template, before any format reminders.
    pub prompt: String,
    /// Every raw reply received, in order; the last one was parsed.
    pub replies: Vec<String>,
    pub action: Option<Action>,
    /// Re-prompts issued after unparseable replies.
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: u32,
    /// User, developer, regulator.
    pub turns: Vec<AgentTurn>,
    pub profile: ActionProfile,
    pub payoffs: PayoffTriple,
    pub cumulative: PayoffTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub game_id: String,
    pub replication: u32,
    pub seed: u64,
    pub spec: GameSpec,
    pub backend: BackendSnapshot,
    pub rounds: Vec<RoundRecord>,
    pub valid: bool,
    pub failure: Option<String>,
    /// Turns of the round that was in progress when the game failed.
    pub incomplete_round: Vec<AgentTurn>,
}

impl GameTranscript {
    pub fn cumulative_payoffs(&self) -> PayoffTriple {
        self.rounds
            .last()
            .map(|r| r.cumulative)
            .unwrap_or(PayoffTriple::ZERO)
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported schema `{found}`")]
    Schema { line: usize, found: String },
    #[error("line {line}: round for game `{game_id}` does not follow its game line")]
    Orphan { line: usize, game_id: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Game {
        schema: String,
        game_id: String,
        replication: u32,
        seed: u64,
        spec: GameSpec,
        backend: BackendSnapshot,
        valid: bool,
        failure: Option<String>,
        rounds_completed: u32,
        incomplete_round: Vec<AgentTurn>,
    },
    Round {
        schema: String,
        game_id: String,
        #[serde(flatten)]
        record: RoundRecord,
    },
}

/// Appends `transcripts` as JSON lines.
pub fn write_jsonl<W: Write>(
    mut out: W,
    transcripts: &[GameTranscript],
) -> Result<(), TranscriptError> {
    for t in transcripts {
        let header = Line::Game {
            schema: TRANSCRIPT_SCHEMA.to_string(),
            game_id: t.game_id.clone(),
            replication: t.replication,
            seed: t.seed,
            spec: t.spec.clone(),
            backend: t.backend.clone(),
            valid: t.valid,
            failure: t.failure.clone(),
            rounds_completed: t.rounds.len() as u32,
            incomplete_round: t.incomplete_round.clone(),
        };
        write_line(&mut out, &header)?;
        for r in &t.rounds {
            let line = Line::Round {
                schema: TRANSCRIPT_SCHEMA.to_string(),
                game_id: t.game_id.clone(),
                record: r.clone(),
            };
            write_line(&mut out, &line)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_line<W: Write>(out: &mut W, line: &Line) -> Result<(), TranscriptError> {
    serde_json::to_writer(&mut *out, line)
        .map_err(|source| TranscriptError::Json { line: 0, source })?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Serializes to a JSON-lines string.
pub fn to_jsonl_string(transcripts: &[GameTranscript]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, transcripts).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits utf-8")
}

/// Reads transcripts back in file order. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<GameTranscript>, TranscriptError> {
    let mut games: Vec<GameTranscript> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|source| TranscriptError::Json { line: n, source })?;
        match parsed {
            Line::Game {
                schema,
                game_id,
                replication,
                seed,
                spec,
                backend,
                valid,
                failure,
                rounds_completed,
                incomplete_round,
            } => {
                check_schema(&schema, n)?;
                games.push(GameTranscript {
                    game_id,
                    replication,
                    seed,
                    spec,
                    backend,
                    rounds: Vec::with_capacity(rounds_completed as usize),
                    valid,
                    failure,
                    incomplete_round,
                });
            }
            Line::Round {
                schema,
                game_id,
                record,
            } => {
                check_schema(&schema, n)?;
                match games.last_mut() {
                    Some(g) if g.game_id == game_id => g.rounds.push(record),
                    _ => return Err(TranscriptError::Orphan { line: n, game_id }),
                }
            }
        }
    }
    Ok(games)
}

fn check_schema(schema: &str, line: usize) -> Result<(), TranscriptError> {
    if schema == TRANSCRIPT_SCHEMA {
        Ok(())
    } else {
        Err(TranscriptError::Schema {
            line,
            found: schema.to_string(),
        })
    }
}
