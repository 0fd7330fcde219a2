//! Three-actor trust game between users, developers and regulators.
//!
//! Two payoff models are supported, selected by [`TrustMode`]:
//!
//! - [`TrustMode::Conditional`]: users condition their trust on the regulator's
//!   public reputation, so a trusting user never adopts when the regulator is
//!   lenient (those outcomes pay nothing to the user and regulator).
//! - [`TrustMode::Unconditional`]: users trust on expected benefit alone.
//!
//! Payoffs are plain `f64`. Every compound entry is evaluated left to right in
//! the order written in [`payoff`], so a caller that writes the same expression
//! gets a bit-identical value.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("parameter `{name}` must be finite and non-negative, got {value}")]
    NegativeParam { name: &'static str, value: f64 },
    #[error("risk factor epsilon must be finite and at most 1, got {0}")]
    EpsilonOutOfRange(f64),
    #[error("unknown profile code `{0}`")]
    UnknownProfile(String),
    #[error("unknown trust mode `{0}`")]
    UnknownMode(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
}

/// Payoff parameters shared by both governance models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    /// User benefit from adopting safe AI.
    pub b_u: f64,
    /// Developer benefit from selling the product.
    pub b_p: f64,
    /// Regulator benefit when users adopt.
    pub b_r: f64,
    /// Developer cost of compliance.
    pub c_p: f64,
    /// Regulator cost of enforcing.
    pub c_r: f64,
    /// Punishment loss of a caught defecting developer.
    pub u: f64,
    /// Regulator cost of administering punishment.
    pub v: f64,
    /// Reward to an enforcing regulator for catching a defector.
    pub b_fo: f64,
    /// Risk factor applied to `b_u` when users adopt unsafe AI.
    pub epsilon: f64,
}

impl Default for GameParams {
    /// `b_U = b_R = b_P = 4, u = 1.5, v = 0.5, c_P = 0.5`, with `c_R = 0.5`,
    /// `epsilon = -0.1` and `b_fo = 2`.
    fn default() -> Self {
        GameParams {
            b_u: 4.0,
            b_p: 4.0,
            b_r: 4.0,
            c_p: 0.5,
            c_r: 0.5,
            u: 1.5,
            v: 0.5,
            b_fo: 2.0,
            epsilon: -0.1,
        }
    }
}

impl GameParams {
    pub fn validate(&self) -> Result<(), GameError> {
        let nonneg = [
            ("b_u", self.b_u),
            ("b_p", self.b_p),
            ("b_r", self.b_r),
            ("c_p", self.c_p),
            ("c_r", self.c_r),
            ("u", self.u),
            ("v", self.v),
            ("b_fo", self.b_fo),
        ];
        for (name, value) in nonneg {
            if !value.is_finite() || value < 0.0 {
                return Err(GameError::NegativeParam { name, value });
            }
        }
        if !self.epsilon.is_finite() || self.epsilon > 1.0 {
            return Err(GameError::EpsilonOutOfRange(self.epsilon));
        }
        Ok(())
    }

    /// Multiplies every payoff-unit parameter by `k`, leaving `epsilon` alone.
    pub fn scaled(&self, k: f64) -> Self {
        GameParams {
            b_u: self.b_u * k,
            b_p: self.b_p * k,
            b_r: self.b_r * k,
            c_p: self.c_p * k,
            c_r: self.c_r * k,
            u: self.u * k,
            v: self.v * k,
            b_fo: self.b_fo * k,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustMode {
    Conditional,
    Unconditional,
}

impl TrustMode {
    pub const ALL: [TrustMode; 2] = [TrustMode::Conditional, TrustMode::Unconditional];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrustMode::Conditional => "conditional",
            TrustMode::Unconditional => "unconditional",
        }
    }

    /// Label of the user's trusting action in this mode.
    pub fn trust_label(&self) -> &'static str {
        match self {
            TrustMode::Conditional => "CT",
            TrustMode::Unconditional => "T",
        }
    }
}

impl fmt::Display for TrustMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrustMode {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conditional" | "ct" => Ok(TrustMode::Conditional),
            "unconditional" | "t" | "nct" => Ok(TrustMode::Unconditional),
            _ => Err(GameError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Developer,
    Regulator,
}

impl Role {
    /// Table column order.
    pub const ALL: [Role; 3] = [Role::User, Role::Developer, Role::Regulator];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Developer => "developer",
            Role::Regulator => "regulator",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Role::User => 0,
            Role::Developer => 1,
            Role::Regulator => 2,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user" => Ok(Role::User),
            "developer" | "creator" => Ok(Role::Developer),
            "regulator" => Ok(Role::Regulator),
            _ => Err(GameError::UnknownRole(s.to_string())),
        }
    }
}

/// A single actor's choice.
///
/// Users pick `Trust`/`NoTrust`; developers and regulators pick
/// `Comply`/`Defect` (for regulators, enforce vs. lenient).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Trust,
    NoTrust,
    Comply,
    Defect,
}

impl Action {
    pub fn is_valid_for(&self, role: Role) -> bool {
        matches!(
            (role, self),
            (Role::User, Action::Trust | Action::NoTrust)
                | (
                    Role::Developer | Role::Regulator,
                    Action::Comply | Action::Defect
                )
        )
    }

    /// True for `Trust` and `Comply`.
    pub fn is_cooperative(&self) -> bool {
        matches!(self, Action::Trust | Action::Comply)
    }

    pub fn label(&self, mode: TrustMode) -> &'static str {
        match self {
            Action::Trust => mode.trust_label(),
            Action::NoTrust => "N",
            Action::Comply => "C",
            Action::Defect => "D",
        }
    }

    /// The two actions available to `role`, cooperative first.
    pub fn options(role: Role) -> [Action; 2] {
        match role {
            Role::User => [Action::Trust, Action::NoTrust],
            Role::Developer | Role::Regulator => [Action::Comply, Action::Defect],
        }
    }
}

/// One joint action of (user, developer, regulator).
///
/// Stored as three cooperation flags; the trust label ("CT" vs "T") is chosen
/// when rendering with a [`TrustMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionProfile {
    pub user_trusts: bool,
    pub developer_complies: bool,
    pub regulator_complies: bool,
}

impl ActionProfile {
    pub const fn new(
        user_trusts: bool,
        developer_complies: bool,
        regulator_complies: bool,
    ) -> Self {
        ActionProfile {
            user_trusts,
            developer_complies,
            regulator_complies,
        }
    }

    /// Position in table order: user-major, cooperative actions first.
    pub fn index(&self) -> usize {
        (usize::from(!self.user_trusts) << 2)
            | (usize::from(!self.developer_complies) << 1)
            | usize::from(!self.regulator_complies)
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < 8, "profile index out of range: {index}");
        ActionProfile::new(index & 4 == 0, index & 2 == 0, index & 1 == 0)
    }

    pub fn action(&self, role: Role) -> Action {
        match role {
            Role::User if self.user_trusts => Action::Trust,
            Role::User => Action::NoTrust,
            Role::Developer if self.developer_complies => Action::Comply,
            Role::Regulator if self.regulator_complies => Action::Comply,
            _ => Action::Defect,
        }
    }

    /// Builds a profile from one action per role.
    ///
    /// Panics if an action does not belong to its role.
    pub fn from_actions(user: Action, developer: Action, regulator: Action) -> Self {
        assert!(
            user.is_valid_for(Role::User),
            "{user:?} is not a user action"
        );
        assert!(
            developer.is_valid_for(Role::Developer),
            "{developer:?} is not a developer action"
        );
        assert!(
            regulator.is_valid_for(Role::Regulator),
            "{regulator:?} is not a regulator action"
        );
        ActionProfile::new(
            user.is_cooperative(),
            developer.is_cooperative(),
            regulator.is_cooperative(),
        )
    }

    /// The profile with `role`'s action flipped.
    pub fn deviate(&self, role: Role) -> Self {
        let mut p = *self;
        match role {
            Role::User => p.user_trusts = !p.user_trusts,
            Role::Developer => p.developer_complies = !p.developer_complies,
            Role::Regulator => p.regulator_complies = !p.regulator_complies,
        }
        p
    }

    /// Compact code such as `CTCC`, `TDD` or `NCD`.
    pub fn label(&self, mode: TrustMode) -> String {
        Role::ALL
            .iter()
            .map(|r| self.action(*r).label(mode))
            .collect()
    }

    /// Parses a code in either mode's notation (`CTDC`, `TDC`, `NDD`, ...).
    pub fn parse_code(code: &str) -> Result<Self, GameError> {
        let upper = code.trim().to_ascii_uppercase();
        let rest = if let Some(r) = upper.strip_prefix("CT") {
            Some((true, r))
        } else if let Some(r) = upper.strip_prefix('T') {
            Some((true, r))
        } else {
            upper.strip_prefix('N').map(|r| (false, r))
        };
        let flag = |c: u8| match c {
            b'C' => Some(true),
            b'D' => Some(false),
            _ => None,
        };
        match rest {
            Some((user, r)) if r.len() == 2 => {
                let b = r.as_bytes();
                match (flag(b[0]), flag(b[1])) {
                    (Some(d), Some(g)) => Ok(ActionProfile::new(user, d, g)),
                    _ => Err(GameError::UnknownProfile(code.to_string())),
                }
            }
            _ => Err(GameError::UnknownProfile(code.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PayoffTriple {
    pub user: f64,
    pub developer: f64,
    pub regulator: f64,
}

impl PayoffTriple {
    pub const ZERO: PayoffTriple = PayoffTriple::new(0.0, 0.0, 0.0);

    pub const fn new(user: f64, developer: f64, regulator: f64) -> Self {
        PayoffTriple {
            user,
            developer,
            regulator,
        }
    }

    pub fn get(&self, role: Role) -> f64 {
        match role {
            Role::User => self.user,
            Role::Developer => self.developer,
            Role::Regulator => self.regulator,
        }
    }

    pub fn add(&self, other: &PayoffTriple) -> PayoffTriple {
        PayoffTriple::new(
            self.user + other.user,
            self.developer + other.developer,
            self.regulator + other.regulator,
        )
    }
}

/// Payoffs of one joint action under the selected governance model.
pub fn payoff(profile: ActionProfile, params: &GameParams, mode: TrustMode) -> PayoffTriple {
    let p = params;
    let ActionProfile {
        user_trusts,
        developer_complies,
        regulator_complies,
    } = profile;

    if !user_trusts {
        let developer = if developer_complies { -p.c_p } else { 0.0 };
        let regulator = if regulator_complies { -p.c_r } else { 0.0 };
        return PayoffTriple::new(0.0, developer, regulator);
    }

    match (developer_complies, regulator_complies, mode) {
        (true, true, _) => PayoffTriple::new(p.b_u, p.b_p - p.c_p, p.b_r - p.c_r),
        (false, true, _) => {
            PayoffTriple::new(p.epsilon * p.b_u, p.b_p - p.u, p.b_r - p.c_r - p.v + p.b_fo)
        }
        // lenient regulator: conditional users stay out
        (true, false, TrustMode::Conditional) => PayoffTriple::new(0.0, -p.c_p, 0.0),
        (false, false, TrustMode::Conditional) => PayoffTriple::ZERO,
        (true, false, TrustMode::Unconditional) => PayoffTriple::new(p.b_u, p.b_p - p.c_p, p.b_r),
        (false, false, TrustMode::Unconditional) => {
            PayoffTriple::new(p.epsilon * p.b_u, p.b_p, p.b_r)
        }
    }
}

/// All eight profiles in table order. The order does not depend on `mode`;
/// the argument is accepted so call sites read the same as rendering code.
pub fn enumerate_profiles(_mode: TrustMode) -> [ActionProfile; 8] {
    std::array::from_fn(ActionProfile::from_index)
}

/// Full payoff table in table order.
pub fn payoff_table(params: &GameParams, mode: TrustMode) -> [(ActionProfile, PayoffTriple); 8] {
    enumerate_profiles(mode).map(|p| (p, payoff(p, params, mode)))
}

/// Pure-strategy Nash equilibria in table order.
///
/// A profile survives when no single actor gains by switching action. With
/// `strict`, a deviation that merely ties also disqualifies the profile.
pub fn find_pure_nash(params: &GameParams, mode: TrustMode, strict: bool) -> Vec<ActionProfile> {
    enumerate_profiles(mode)
        .into_iter()
        .filter(|&profile| {
            let here = payoff(profile, params, mode);
            Role::ALL.iter().all(|&role| {
                let there = payoff(profile.deviate(role), params, mode);
                let gain = there.get(role) - here.get(role);
                if strict {
                    gain < 0.0
                } else {
                    gain <= 0.0
                }
            })
        })
        .collect()
}
