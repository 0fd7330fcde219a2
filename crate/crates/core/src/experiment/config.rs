//! TOML experiment configuration.
//!
//! ```toml
//! master_seed = 7
//! output_dir = "results/oneshot"
//! parallelism = 4
//! personality = "none"          # "none" | "ablation" | "<trait>", e.g. "strict"
//!
//! [sweep]
//! b_fo = [0, 1, 2, 3, 4, 5, 6]
//! epsilon = [-0.1, 0.2]
//! c_r = [0.5, 5.0]
//! modes = ["conditional", "unconditional"]
//!
//! [params]                      # fixed payoff parameters
//! b_u = 4.0
//! b_p = 4.0
//! b_r = 4.0
//! u = 1.5
//! v = 0.5
//! c_p = 0.5
//!
//! [game]
//! rounds = 1
//! replications = 30
//! max_reprompts = 3
//! # template = "my_template.txt"
//!
//! [backend]
//! kind = "chat-completion-http"
//! model = "gpt-4o"
//! endpoint = "https://api.openai.com/v1"
//! api_key_env = "OPENAI_API_KEY"
//! ```
//!
//! Unknown keys are rejected at every level.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::game::{GameParams, Role, TrustMode};
use crate::harness::{BackendConfig, Personality};

use super::ExperimentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_b_fo")]
    pub b_fo: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_c_r")]
    pub c_r: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<TrustMode>,
}

fn default_b_fo() -> Vec<f64> {
    (0..=6).map(f64::from).collect()
}
fn default_epsilon() -> Vec<f64> {
    vec![-0.1, 0.2]
}
fn default_c_r() -> Vec<f64> {
    vec![0.5, 5.0]
}
fn default_modes() -> Vec<TrustMode> {
    TrustMode::ALL.to_vec()
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            b_fo: default_b_fo(),
            epsilon: default_epsilon(),
            c_r: default_c_r(),
            modes: default_modes(),
        }
    }
}

/// Payoff parameters held fixed across the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedParams {
    pub b_u: f64,
    pub b_p: f64,
    pub b_r: f64,
    pub u: f64,
    pub v: f64,
    pub c_p: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        let d = GameParams::default();
        FixedParams {
            b_u: d.b_u,
            b_p: d.b_p,
            b_r: d.b_r,
            u: d.u,
            v: d.v,
            c_p: d.c_p,
        }
    }
}

impl FixedParams {
    pub fn with_sweep(&self, epsilon: f64, c_r: f64, b_fo: f64) -> GameParams {
        GameParams {
            b_u: self.b_u,
            b_p: self.b_p,
            b_r: self.b_r,
            c_p: self.c_p,
            c_r,
            u: self.u,
            v: self.v,
            b_fo,
            epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSettings {
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default = "default_reprompts")]
    pub max_reprompts: u32,
    /// Template file; relative paths resolve against the config file.
    pub template: Option<PathBuf>,
}

fn default_rounds() -> u32 {
    1
}
fn default_replications() -> u32 {
    30
}
fn default_reprompts() -> u32 {
    3
}

impl Default for GameSettings {
    fn default() -> Self {
        GameSettings {
            rounds: default_rounds(),
            replications: default_replications(),
            max_reprompts: default_reprompts(),
            template: None,
        }
    }
}

/// One personality condition of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Treatment {
    /// No agent has a personality.
    Control,
    /// Exactly one agent carries this trait.
    Single(Personality),
}

impl Treatment {
    pub fn personality(&self) -> Option<Personality> {
        match self {
            Treatment::Control => None,
            Treatment::Single(p) => Some(*p),
        }
    }

    pub fn role(&self) -> Option<Role> {
        self.personality().map(|p| p.role())
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Treatment::Control => f.write_str("none"),
            Treatment::Single(p) => write!(f, "{}:{}", p.role(), p.name()),
        }
    }
}

impl FromStr for Treatment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Treatment::Control);
        }
        let name = s.split_once(':').map_or(s, |(_, n)| n);
        let p: Personality = name
            .parse()
            .map_err(|_| ExperimentError::Config(format!("unknown treatment `{s}`")))?;
        if let Some((role, _)) = s.split_once(':') {
            if role.parse::<Role>().ok() != Some(p.role()) {
                return Err(ExperimentError::Config(format!(
                    "treatment `{s}`: trait belongs to the {}",
                    p.role()
                )));
            }
        }
        Ok(Treatment::Single(p))
    }
}

impl Serialize for Treatment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Treatment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which personality conditions an experiment covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PersonalityTreatment {
    #[default]
    None,
    /// Control plus each of the six traits on its own.
    Ablation,
    Single(Personality),
}

impl PersonalityTreatment {
    pub fn treatments(&self) -> Vec<Treatment> {
        match self {
            PersonalityTreatment::None => vec![Treatment::Control],
            PersonalityTreatment::Ablation => std::iter::once(Treatment::Control)
                .chain(Personality::ALL.into_iter().map(Treatment::Single))
                .collect(),
            PersonalityTreatment::Single(p) => vec![Treatment::Single(*p)],
        }
    }
}

impl fmt::Display for PersonalityTreatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PersonalityTreatment::None => f.write_str("none"),
            PersonalityTreatment::Ablation => f.write_str("ablation"),
            PersonalityTreatment::Single(p) => f.write_str(p.name()),
        }
    }
}

impl FromStr for PersonalityTreatment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" => Ok(PersonalityTreatment::None),
            "ablation" => Ok(PersonalityTreatment::Ablation),
            other => match other.parse::<Treatment>()? {
                Treatment::Control => Ok(PersonalityTreatment::None),
                Treatment::Single(p) => Ok(PersonalityTreatment::Single(p)),
            },
        }
    }
}

impl Serialize for PersonalityTreatment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PersonalityTreatment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub personality: PersonalityTreatment,
    /// Lets the personality ablation run outside one-shot conditional games.
    #[serde(default)]
    pub ablation_override: bool,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub params: FixedParams,
    #[serde(default)]
    pub game: GameSettings,
    pub backend: BackendConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_parallelism() -> usize {
    4
}

impl ExperimentConfig {
    /// Defaults everywhere except the backend.
    pub fn new(backend: BackendConfig) -> Self {
        ExperimentConfig {
            name: None,
            master_seed: 0,
            output_dir: default_output_dir(),
            parallelism: default_parallelism(),
            personality: PersonalityTreatment::None,
            ablation_override: false,
            sweep: SweepConfig::default(),
            params: FixedParams::default(),
            game: GameSettings::default(),
            backend,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config file. A relative `game.template` is
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text)?;
        if let (Some(t), Some(dir)) = (&config.game.template, path.parent()) {
            if t.is_relative() {
                config.game.template = Some(dir.join(t));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: String| Err(ExperimentError::Config(m));
        if self.game.replications == 0 {
            return err("game.replications must be at least 1".into());
        }
        if self.game.rounds == 0 {
            return err("game.rounds must be at least 1".into());
        }
        if self.parallelism == 0 {
            return err("parallelism must be at least 1".into());
        }
        let s = &self.sweep;
        for (name, empty) in [
            ("b_fo", s.b_fo.is_empty()),
            ("epsilon", s.epsilon.is_empty()),
            ("c_r", s.c_r.is_empty()),
            ("modes", s.modes.is_empty()),
        ] {
            if empty {
                return err(format!("sweep.{name} must not be empty"));
            }
        }
        for &eps in &s.epsilon {
            for &c_r in &s.c_r {
                for &b_fo in &s.b_fo {
                    self.params
                        .with_sweep(eps, c_r, b_fo)
                        .validate()
                        .map_err(|e| {
                            ExperimentError::Config(format!(
                                "sweep point (epsilon={eps}, c_r={c_r}, b_fo={b_fo}): {e}"
                            ))
                        })?;
                }
            }
        }
        self.backend
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    /// Number of cells the sweep expands to.
    pub fn cell_count(&self) -> usize {
        let s = &self.sweep;
        s.modes.len()
            * s.epsilon.len()
            * s.c_r.len()
            * s.b_fo.len()
            * self.personality.treatments().len()
    }
}
