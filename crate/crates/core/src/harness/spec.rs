use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::game::{GameParams, Role, TrustMode};

use super::HarnessError;

/// The six fixed personality traits, two per role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Personality {
    RiskAverse,
    RiskTaking,
    Aggressive,
    Cooperative,
    Lenient,
    Strict,
}

impl Personality {
    pub const ALL: [Personality; 6] = [
        Personality::RiskAverse,
        Personality::RiskTaking,
        Personality::Aggressive,
        Personality::Cooperative,
        Personality::Lenient,
        Personality::Strict,
    ];

    pub fn role(&self) -> Role {
        match self {
            Personality::RiskAverse | Personality::RiskTaking => Role::User,
            Personality::Aggressive | Personality::Cooperative => Role::Developer,
            Personality::Lenient | Personality::Strict => Role::Regulator,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Personality::RiskAverse => "risk-averse",
            Personality::RiskTaking => "risk-taking",
            Personality::Aggressive => "aggressive",
            Personality::Cooperative => "cooperative",
            Personality::Lenient => "lenient",
            Personality::Strict => "strict",
        }
    }

    /// What the trait means, addressed to the agent.
    pub fn meaning(&self) -> &'static str {
        match self {
            Personality::RiskAverse => "you reject new AI systems to avoid uncertainty",
            Personality::RiskTaking => {
                "you adopt new AI systems to benefit from potential advancements"
            }
            Personality::Aggressive => "you develop quickly to stay ahead, accepting some risks",
            Personality::Cooperative => "you take a cautious approach to minimize risk",
            Personality::Lenient => "you trust developers to regulate themselves",
            Personality::Strict => "you require verification before deployment to ensure safety",
        }
    }

    /// Canonical trait string injected into prompts, e.g.
    /// `aggressive, i.e. you develop quickly to stay ahead, accepting some risks`.
    pub fn trait_text(&self) -> String {
        format!("{}, i.e. {}", self.name(), self.meaning())
    }
}

impl fmt::Display for Personality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Personality {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Personality::ALL
            .into_iter()
            .find(|p| p.name() == s || (s == "risk-adverse" && *p == Personality::RiskAverse))
            .ok_or(HarnessError::UnknownPersonality(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub role: Role,
    pub personality: Option<Personality>,
    pub backend_id: String,
}

impl AgentSpec {
    pub fn new(role: Role, backend_id: impl Into<String>) -> Self {
        AgentSpec {
            role,
            personality: None,
            backend_id: backend_id.into(),
        }
    }

    pub fn with_personality(mut self, personality: Personality) -> Self {
        self.personality = Some(personality);
        self
    }
}

/// Everything needed to play one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub mode: TrustMode,
    pub params: GameParams,
    pub rounds: u32,
    /// One agent per role, in table order (user, developer, regulator).
    pub agents: Vec<AgentSpec>,
    /// Name of the prompt template used.
    pub template: String,
    /// Re-prompts allowed per agent per round after an unparseable reply.
    pub max_reprompts: u32,
    pub communicate: bool,
    pub reveal_personalities: bool,
}

impl GameSpec {
    /// Three personality-free agents bound to `backend_id`.
    pub fn new(mode: TrustMode, params: GameParams, rounds: u32, backend_id: &str) -> Self {
        GameSpec {
            mode,
            params,
            rounds,
            agents: Role::ALL
                .iter()
                .map(|r| AgentSpec::new(*r, backend_id))
                .collect(),
            template: super::prompt::DEFAULT_TEMPLATE_NAME.to_string(),
            max_reprompts: 3,
            communicate: false,
            reveal_personalities: false,
        }
    }

    pub fn with_personality(mut self, personality: Personality) -> Self {
        let role = personality.role();
        if let Some(agent) = self.agents.iter_mut().find(|a| a.role == role) {
            agent.personality = Some(personality);
        }
        self
    }

    pub fn agent(&self, role: Role) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.role == role)
    }

    /// The backend shared by all agents.
    pub fn backend_id(&self) -> &str {
        self.agents
            .first()
            .map(|a| a.backend_id.as_str())
            .unwrap_or("")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.params.validate()?;
        if self.rounds == 0 {
            return Err(HarnessError::InvalidSpec(
                "rounds must be at least 1".into(),
            ));
        }
        if self.communicate {
            return Err(HarnessError::InvalidSpec(
                "agents may not communicate".into(),
            ));
        }
        if self.reveal_personalities {
            return Err(HarnessError::InvalidSpec(
                "personalities of other agents may not be revealed".into(),
            ));
        }
        if self.agents.len() != 3 {
            return Err(HarnessError::InvalidSpec(format!(
                "expected 3 agents, got {}",
                self.agents.len()
            )));
        }
        for role in Role::ALL {
            let n = self.agents.iter().filter(|a| a.role == role).count();
            if n != 1 {
                return Err(HarnessError::InvalidSpec(format!(
                    "role {role} appears {n} times"
                )));
            }
        }
        let backend = self.backend_id();
        if self.agents.iter().any(|a| a.backend_id != backend) {
            return Err(HarnessError::MixedBackends);
        }
        for agent in &self.agents {
            if let Some(p) = agent.personality {
                if p.role() != agent.role {
                    return Err(HarnessError::InvalidSpec(format!(
                        "personality {p} belongs to the {}, not the {}",
                        p.role(),
                        agent.role
                    )));
                }
            }
        }
        Ok(())
    }
}
