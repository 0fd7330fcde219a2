//! Extracting a single action from a free-text model reply.

use thiserror::Error;

use crate::game::{Action, Role};

/// Marker the prompts ask the model to end with, e.g. `ANSWER: C`.
pub const ANSWER_MARKER: &str = "ANSWER:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("reply names no {0} action")]
    Empty(Role),
    #[error("reply names more than one {0} action")]
    Ambiguous(Role),
}

/// Reads the acting role's choice out of `raw_reply`.
///
/// The text after the last `ANSWER:` marker (case-insensitive, to end of
/// line) is tried first. If there is no marker, or it does not name exactly
/// one action, the whole reply is scanned for whole-word labels and synonyms.
/// Negations such as "not trust" or "don't comply" count as the
/// non-cooperative action.
pub fn parse_action(raw_reply: &str, role: Role) -> Result<Action, ParseError> {
    if let Some(answer) = marker_answer(raw_reply) {
        if let Ok(action) = scan(answer, role) {
            return Ok(action);
        }
    }
    scan(raw_reply, role)
}

fn marker_answer(reply: &str) -> Option<&str> {
    let lower = reply.to_ascii_lowercase();
    let marker = ANSWER_MARKER.to_ascii_lowercase();
    let start = lower.rfind(&marker)? + marker.len();
    let rest = &reply[start..];
    Some(rest.lines().next().unwrap_or(""))
}

fn scan(text: &str, role: Role) -> Result<Action, ParseError> {
    let [cooperative, other] = Action::options(role);
    let words = tokenize(text);
    let mut saw_coop = false;
    let mut saw_other = false;
    let mut i = 0;
    while i < words.len() {
        let w = words[i].as_str();
        if is_negation(w) {
            if let Some(next) = words.get(i + 1) {
                if is_cooperative_word(next, role) {
                    saw_other = true;
                    i += 2;
                    continue;
                }
            }
        }
        if is_cooperative_word(w, role) {
            saw_coop = true;
        } else if is_defecting_word(w, role) {
            saw_other = true;
        }
        i += 1;
    }
    match (saw_coop, saw_other) {
        (true, false) => Ok(cooperative),
        (false, true) => Ok(other),
        (true, true) => Err(ParseError::Ambiguous(role)),
        (false, false) => Err(ParseError::Empty(role)),
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|w| w.trim_matches(|c| c == '\'' || c == '\u{2019}'))
        .filter(|w| !w.is_empty())
        .map(|w| w.replace('\u{2019}', "'").to_lowercase())
        .collect()
}

fn is_negation(w: &str) -> bool {
    matches!(
        w,
        "not" | "no" | "don't" | "dont" | "never" | "won't" | "cannot" | "can't"
    )
}

fn is_cooperative_word(w: &str, role: Role) -> bool {
    match role {
        Role::User => matches!(w, "t" | "ct" | "trust" | "trusts" | "trusting"),
        Role::Developer => matches!(w, "c" | "comply" | "complies" | "complying" | "compliant"),
        Role::Regulator => matches!(
            w,
            "c" | "comply" | "complies" | "complying" | "enforce" | "enforces" | "enforcing"
        ),
    }
}

fn is_defecting_word(w: &str, role: Role) -> bool {
    match role {
        Role::User => matches!(w, "n" | "distrust" | "notrust"),
        Role::Developer => matches!(w, "d" | "defect" | "defects" | "defecting"),
        Role::Regulator => matches!(w, "d" | "defect" | "defects" | "defecting" | "lenient"),
    }
}
