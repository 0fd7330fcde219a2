//! `{{placeholder}}` prompt templates.
//!
//! Placeholder catalog:
//!
//! | name               | required | value                                                        |
//! |--------------------|----------|--------------------------------------------------------------|
//! | `role`             | yes      | the agent's role name                                        |
//! | `role_description` | no       | one sentence on what the role decides                        |
//! | `actions`          | yes      | the agent's two action labels with their meaning             |
//! | `payoffs`          | yes      | every joint outcome and its payoffs for the current params   |
//! | `reputation`       | yes      | trust-mode note (regulator reputation is public in CT mode)  |
//! | `personality`      | yes      | the agent's own trait, or empty                              |
//! | `round`            | no       | current round, 1-based                                       |
//! | `total_rounds`     | no       | number of rounds in the game                                 |
//! | `history`          | yes      | one `- Round k:` line per earlier round, or `(none)`         |
//! | `answer`           | yes      | the mandated `ANSWER: <label>` instruction                   |

use thiserror::Error;

use crate::game::{enumerate_profiles, payoff, Action, Role, TrustMode};

use super::parse::ANSWER_MARKER;
use super::spec::{AgentSpec, GameSpec};
use super::transcript::RoundRecord;

pub const DEFAULT_TEMPLATE_NAME: &str = "default-v1";
pub const DEFAULT_TEMPLATE: &str = include_str!("../../templates/default.txt");

/// Prefix of every history line.
pub const HISTORY_LINE_PREFIX: &str = "- Round ";
pub const EMPTY_HISTORY: &str = "(none)";

const OPEN: &str = "{{";
const CLOSE: &str = "}}";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placeholder {
    Role,
    RoleDescription,
    Actions,
    Payoffs,
    Reputation,
    Personality,
    Round,
    TotalRounds,
    History,
    Answer,
}

impl Placeholder {
    pub const ALL: [Placeholder; 10] = [
        Placeholder::Role,
        Placeholder::RoleDescription,
        Placeholder::Actions,
        Placeholder::Payoffs,
        Placeholder::Reputation,
        Placeholder::Personality,
        Placeholder::Round,
        Placeholder::TotalRounds,
        Placeholder::History,
        Placeholder::Answer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Placeholder::Role => "role",
            Placeholder::RoleDescription => "role_description",
            Placeholder::Actions => "actions",
            Placeholder::Payoffs => "payoffs",
            Placeholder::Reputation => "reputation",
            Placeholder::Personality => "personality",
            Placeholder::Round => "round",
            Placeholder::TotalRounds => "total_rounds",
            Placeholder::History => "history",
            Placeholder::Answer => "answer",
        }
    }

    pub fn is_required(&self) -> bool {
        !matches!(
            self,
            Placeholder::RoleDescription | Placeholder::Round | Placeholder::TotalRounds
        )
    }

    fn from_name(name: &str) -> Option<Self> {
        Placeholder::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown placeholder `{{{{{0}}}}}`")]
    UnknownPlaceholder(String),
    #[error("template is missing required placeholder `{{{{{0}}}}}`")]
    MissingRequired(&'static str),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
    #[error("stray `}}}}` at byte {0}")]
    StrayClose(usize),
    #[error("game has no {0} agent")]
    MissingAgent(Role),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Placeholder),
}

/// A parsed template. Parsing validates the placeholder set once so rendering
/// can only fail on missing game data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut rest = text;
        let mut offset = 0;
        while let Some(open) = rest.find(OPEN) {
            let before = &rest[..open];
            if let Some(close) = before.find(CLOSE) {
                return Err(TemplateError::StrayClose(offset + close));
            }
            if !before.is_empty() {
                segments.push(Segment::Text(before.to_string()));
            }
            let after_open = &rest[open + OPEN.len()..];
            let close = after_open
                .find(CLOSE)
                .ok_or(TemplateError::Unterminated(offset + open))?;
            let name = after_open[..close].trim();
            let slot = Placeholder::from_name(name)
                .ok_or_else(|| TemplateError::UnknownPlaceholder(name.to_string()))?;
            segments.push(Segment::Slot(slot));
            let consumed = open + OPEN.len() + close + CLOSE.len();
            offset += consumed;
            rest = &rest[consumed..];
        }
        if let Some(close) = rest.find(CLOSE) {
            return Err(TemplateError::StrayClose(offset + close));
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        for p in Placeholder::ALL
            .into_iter()
            .filter(Placeholder::is_required)
        {
            if !segments.contains(&Segment::Slot(p)) {
                return Err(TemplateError::MissingRequired(p.name()));
            }
        }
        Ok(PromptTemplate {
            name: name.into(),
            segments,
        })
    }

    pub fn default_template() -> Self {
        Self::parse(DEFAULT_TEMPLATE_NAME, DEFAULT_TEMPLATE).expect("built-in template is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Renders the prompt `agent` sees at round `history.len() + 1`.
    pub fn render(
        &self,
        agent: &AgentSpec,
        spec: &GameSpec,
        history: &[RoundRecord],
    ) -> Result<String, TemplateError> {
        for role in Role::ALL {
            if spec.agent(role).is_none() {
                return Err(TemplateError::MissingAgent(role));
            }
        }
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(p) => out.push_str(&fill(*p, agent, spec, history)),
            }
        }
        Ok(out)
    }
}

/// Parses `template` and renders it; see [`PromptTemplate::render`].
pub fn render_prompt(
    template: &str,
    agent: &AgentSpec,
    spec: &GameSpec,
    history: &[RoundRecord],
) -> Result<String, TemplateError> {
    PromptTemplate::parse("inline", template)?.render(agent, spec, history)
}

fn fill(p: Placeholder, agent: &AgentSpec, spec: &GameSpec, history: &[RoundRecord]) -> String {
    let mode = spec.mode;
    match p {
        Placeholder::Role => agent.role.as_str().to_string(),
        Placeholder::RoleDescription => role_description(agent.role).to_string(),
        Placeholder::Actions => Action::options(agent.role)
            .iter()
            .map(|a| {
                format!(
                    "- {}: {}",
                    a.label(mode),
                    action_meaning(agent.role, *a, mode)
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Placeholder::Payoffs => payoff_lines(spec),
        Placeholder::Reputation => reputation_note(agent.role, mode).to_string(),
        Placeholder::Personality => agent
            .personality
            .map(|t| format!("Your personality: you are {}.", t.trait_text()))
            .unwrap_or_default(),
        Placeholder::Round => (history.len() + 1).to_string(),
        Placeholder::TotalRounds => spec.rounds.to_string(),
        Placeholder::History => history_block(agent.role, mode, history),
        Placeholder::Answer => answer_instruction(agent.role, mode),
    }
}

fn role_description(role: Role) -> &'static str {
    match role {
        Role::User => "You decide whether to trust and adopt an AI system.",
        Role::Developer => {
            "You decide whether to comply with safety regulations when building an AI system."
        }
        Role::Regulator => "You decide whether to enforce compliance on AI developers.",
    }
}

fn action_meaning(role: Role, action: Action, mode: TrustMode) -> &'static str {
    match (role, action, mode) {
        (_, Action::Trust, TrustMode::Conditional) => {
            "trust the AI system conditionally: adopt it only if the regulator enforces compliance"
        }
        (_, Action::Trust, TrustMode::Unconditional) => "trust and adopt the AI system",
        (_, Action::NoTrust, _) => "do not trust the AI system and do not adopt it",
        (Role::Regulator, Action::Comply, _) => "enforce compliance, which costs you resources",
        (Role::Regulator, Action::Defect, _) => "do not enforce compliance",
        (_, Action::Comply, _) => "comply with regulations and build safe AI, at extra cost",
        (_, Action::Defect, _) => "do not comply and build unsafe AI",
    }
}

fn payoff_lines(spec: &GameSpec) -> String {
    let mode = spec.mode;
    enumerate_profiles(mode)
        .iter()
        .map(|p| {
            let pay = payoff(*p, &spec.params, mode);
            format!(
                "- If the user plays {}, the developer plays {} and the regulator plays {}: \
                 the user gets {}, the developer gets {}, the regulator gets {}.",
                p.action(Role::User).label(mode),
                p.action(Role::Developer).label(mode),
                p.action(Role::Regulator).label(mode),
                pay.user,
                pay.developer,
                pay.regulator,
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn reputation_note(role: Role, mode: TrustMode) -> &'static str {
    match (mode, role) {
        (TrustMode::Unconditional, _) => "",
        (TrustMode::Conditional, Role::User) => {
            "The regulator's reputation is publicly known before you choose. If you play CT, \
             you adopt only when the regulator enforces compliance; if the regulator is lenient \
             you do not adopt."
        }
        (TrustMode::Conditional, _) => {
            "The regulator's reputation is publicly known to the user, who may condition \
             trust on it."
        }
    }
}

fn history_block(role: Role, mode: TrustMode, history: &[RoundRecord]) -> String {
    if history.is_empty() {
        return EMPTY_HISTORY.to_string();
    }
    history
        .iter()
        .map(|r| {
            format!(
                "{}{}: user played {}, developer played {}, regulator played {}; your payoff was {}.",
                HISTORY_LINE_PREFIX,
                r.round,
                r.profile.action(Role::User).label(mode),
                r.profile.action(Role::Developer).label(mode),
                r.profile.action(Role::Regulator).label(mode),
                r.payoffs.get(role),
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The one-word answer instruction for `role`.
pub fn answer_instruction(role: Role, mode: TrustMode) -> String {
    let [a, b] = Action::options(role).map(|x| x.label(mode));
    format!(
        "Answer with exactly one word. End your reply with a single line of the form \
         `{ANSWER_MARKER} <label>`, for example `{ANSWER_MARKER} {a}` or `{ANSWER_MARKER} {b}`."
    )
}

/// Appended after an unparseable reply.
pub fn format_reminder(role: Role, mode: TrustMode) -> String {
    let [a, b] = Action::options(role).map(|x| x.label(mode));
    format!("Your reply could not be read. Reply with one line only: `{ANSWER_MARKER} {a}` or `{ANSWER_MARKER} {b}`.")
}

/// Number of history lines in a rendered prompt.
pub fn count_history_lines(prompt: &str) -> usize {
    prompt
        .lines()
        .filter(|l| l.starts_with(HISTORY_LINE_PREFIX))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameParams;
    use crate::harness::spec::Personality;

    fn spec(mode: TrustMode, rounds: u32) -> GameSpec {
        GameSpec::new(mode, GameParams::default(), rounds, "b")
    }

    #[test]
    fn default_template_parses_and_resolves() {
        let t = PromptTemplate::default_template();
        let s = spec(TrustMode::Conditional, 1);
        for agent in &s.agents {
            let out = t.render(agent, &s, &[]).unwrap();
            assert!(!out.contains("{{") && !out.contains("}}"));
            assert_eq!(count_history_lines(&out), 0);
            assert!(out.contains(EMPTY_HISTORY));
            assert_eq!(
                out.lines()
                    .filter(|l| l.starts_with("- If the user plays"))
                    .count(),
                8
            );
        }
    }

    #[test]
    fn personality_only_in_own_prompt() {
        let t = PromptTemplate::default_template();
        let s = spec(TrustMode::Conditional, 1).with_personality(Personality::Aggressive);
        let dev = t
            .render(s.agent(Role::Developer).unwrap(), &s, &[])
            .unwrap();
        assert!(dev.contains("you develop quickly to stay ahead, accepting some risks"));
        let user = t.render(s.agent(Role::User).unwrap(), &s, &[]).unwrap();
        assert!(!user.contains(&Personality::Aggressive.trait_text()));
        assert!(!user.contains(Personality::Aggressive.meaning()));
    }

    #[test]
    fn conditional_user_is_told_reputation_is_public() {
        let t = PromptTemplate::default_template();
        let s = spec(TrustMode::Conditional, 1);
        let user = t.render(s.agent(Role::User).unwrap(), &s, &[]).unwrap();
        assert!(user.contains("reputation is publicly known before you choose"));
        let s = spec(TrustMode::Unconditional, 1);
        let user = t.render(s.agent(Role::User).unwrap(), &s, &[]).unwrap();
        assert!(!user.contains("reputation"));
    }

    #[test]
    fn payoffs_use_current_params() {
        let t = PromptTemplate::default_template();
        let s = spec(TrustMode::Conditional, 1);
        let out = t.render(&s.agents[0], &s, &[]).unwrap();
        assert!(out.contains(
            "If the user plays CT, the developer plays D and the regulator plays C: \
             the user gets -0.4, the developer gets 2.5, the regulator gets 5."
        ));
    }

    #[test]
    fn template_errors() {
        assert_eq!(
            PromptTemplate::parse("t", "{{role}} {{colour}}"),
            Err(TemplateError::UnknownPlaceholder("colour".into()))
        );
        assert_eq!(
            PromptTemplate::parse("t", "{{role}} {{actions"),
            Err(TemplateError::Unterminated(9))
        );
        assert!(matches!(
            PromptTemplate::parse("t", "{{role}} }} x"),
            Err(TemplateError::StrayClose(_))
        ));
        assert_eq!(
            PromptTemplate::parse("t", "{{role}}"),
            Err(TemplateError::MissingRequired("actions"))
        );
        let err = TemplateError::UnknownPlaceholder("colour".into()).to_string();
        assert_eq!(err, "unknown placeholder `{{colour}}`");
    }

    #[test]
    fn missing_agent_is_an_error() {
        let t = PromptTemplate::default_template();
        let mut s = spec(TrustMode::Conditional, 1);
        let agent = s.agents.pop().unwrap();
        assert_eq!(
            t.render(&agent, &s, &[]),
            Err(TemplateError::MissingAgent(Role::Regulator))
        );
    }

    #[test]
    fn inline_render_matches_parsed() {
        let s = spec(TrustMode::Unconditional, 3);
        let a = render_prompt(DEFAULT_TEMPLATE, &s.agents[1], &s, &[]).unwrap();
        let b = PromptTemplate::default_template()
            .render(&s.agents[1], &s, &[])
            .unwrap();
        assert_eq!(a, b);
        assert!(a.contains("round 1 of 3"));
    }
}
