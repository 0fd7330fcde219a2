//! Plays the trust game with three independently prompted agents.
//!
//! Agents never see each other's replies within a round or each other's
//! personalities; the only shared information is the game description and
//! the parsed actions of earlier rounds.

pub mod backend;
pub mod parse;
pub mod prompt;
pub mod spec;
pub mod transcript;

use thiserror::Error;

use crate::game::{payoff, ActionProfile, GameError, PayoffTriple, Role};

use backend::{Backend, BackendError, BackendRegistry, ChatMessage, Query};
use prompt::{format_reminder, PromptTemplate, TemplateError};
use transcript::{AgentTurn, GameTranscript, RoundRecord};

pub use backend::{BackendConfig, BackendKind, BackendSnapshot};
pub use parse::{parse_action, ParseError};
pub use prompt::render_prompt;
pub use spec::{AgentSpec, GameSpec, Personality};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),
    #[error("all agents in a game must share one backend")]
    MixedBackends,
    #[error("unknown personality `{0}`")]
    UnknownPersonality(String),
    #[error(transparent)]
    Params(#[from] GameError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Identity of one game execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameRun {
    pub game_id: String,
    pub seed: u64,
    pub replication: u32,
}

impl GameRun {
    pub fn new(game_id: impl Into<String>, seed: u64, replication: u32) -> Self {
        GameRun {
            game_id: game_id.into(),
            seed,
            replication,
        }
    }
}

/// Plays `spec.rounds` rounds, querying agents in table order.
///
/// Spec, template and backend-lookup problems are returned as errors. Runtime
/// failures (backend exhaustion, unparseable replies after all re-prompts)
/// produce a transcript marked invalid, with the completed rounds and the
/// partial round kept.
pub fn play_game(
    spec: &GameSpec,
    template: &PromptTemplate,
    backends: &BackendRegistry,
    run: &GameRun,
) -> Result<GameTranscript, HarnessError> {
    play_game_ordered(spec, template, backends, run, Role::ALL)
}

/// [`play_game`] with an explicit per-round query order.
pub fn play_game_ordered(
    spec: &GameSpec,
    template: &PromptTemplate,
    backends: &BackendRegistry,
    run: &GameRun,
    order: [Role; 3],
) -> Result<GameTranscript, HarnessError> {
    spec.validate()?;
    let mut sorted = order;
    sorted.sort();
    if sorted != Role::ALL {
        return Err(HarnessError::InvalidSpec(format!(
            "query order {order:?} is not a permutation of the roles"
        )));
    }
    let backend = backends.get(spec.backend_id())?;

    let mut transcript = GameTranscript {
        game_id: run.game_id.clone(),
        replication: run.replication,
        seed: run.seed,
        spec: spec.clone(),
        backend: backend.snapshot(),
        rounds: Vec::with_capacity(spec.rounds as usize),
        valid: true,
        failure: None,
        incomplete_round: Vec::new(),
    };
    let mut cumulative = PayoffTriple::ZERO;

    for round in 1..=spec.rounds {
        // every agent is asked even if another fails, so the record of a
        // failed round does not depend on the query order
        let mut turns: Vec<(AgentTurn, Option<String>)> = Vec::with_capacity(3);
        for role in order {
            let agent = spec.agent(role).expect("validated spec has every role");
            let prompt = template.render(agent, spec, &transcript.rounds)?;
            turns.push(ask(backend.as_ref(), spec, run, role, round, prompt));
        }
        turns.sort_by_key(|(t, _)| t.role);
        if let Some((turn, Some(reason))) = turns.iter().find(|(_, f)| f.is_some()) {
            transcript.valid = false;
            transcript.failure = Some(format!("round {round}, {}: {reason}", turn.role));
            transcript.incomplete_round = turns.into_iter().map(|(t, _)| t).collect();
            return Ok(transcript);
        }
        let turns: Vec<AgentTurn> = turns.into_iter().map(|(t, _)| t).collect();
        let action = |i: usize| turns[i].action.expect("successful turn has an action");
        let profile = ActionProfile::from_actions(action(0), action(1), action(2));
        let payoffs = payoff(profile, &spec.params, spec.mode);
        cumulative = cumulative.add(&payoffs);
        transcript.rounds.push(RoundRecord {
            round,
            turns,
            profile,
            payoffs,
            cumulative,
        });
    }
    Ok(transcript)
}

fn ask(
    backend: &dyn Backend,
    spec: &GameSpec,
    run: &GameRun,
    role: Role,
    round: u32,
    prompt: String,
) -> (AgentTurn, Option<String>) {
    let mut messages = vec![ChatMessage::user(prompt.clone())];
    let mut turn = AgentTurn {
        role,
        prompt,
        replies: Vec::new(),
        action: None,
        retries: 0,
    };
    let mut last_error = String::new();
    for attempt in 0..=spec.max_reprompts {
        let query = Query {
            role,
            mode: spec.mode,
            messages: &messages,
            game_seed: run.seed,
            replication: run.replication,
            round,
            attempt,
        };
        let reply = match backend.complete(&query) {
            Ok(r) => r,
            Err(e) => return (turn, Some(format!("backend: {e}"))),
        };
        turn.replies.push(reply.clone());
        match parse_action(&reply, role) {
            Ok(action) => {
                turn.action = Some(action);
                return (turn, None);
            }
            Err(e) => {
                last_error = e.to_string();
                if attempt < spec.max_reprompts {
                    turn.retries += 1;
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format_reminder(role, spec.mode)));
                }
            }
        }
    }
    (turn, Some(format!("parse: {last_error}")))
}
