//! Model backends: a chat-completion HTTP client plus two offline kinds
//! (fixed-action and scripted) used for tests and dry runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Action, ActionProfile, Role, TrustMode};

use super::parse::ANSWER_MARKER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

/// One request to a backend. The bookkeeping fields let offline backends
/// answer deterministically without depending on query order.
#[derive(Debug, Clone)]
pub struct Query<'a> {
    pub role: Role,
    pub mode: TrustMode,
    pub messages: &'a [ChatMessage],
    pub game_seed: u64,
    pub replication: u32,
    /// 1-based.
    pub round: u32,
    /// 0 for the first ask, incremented on each re-prompt.
    pub attempt: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("request failed with status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("unknown backend `{0}`")]
    Unknown(String),
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn snapshot(&self) -> BackendSnapshot;
    fn complete(&self, query: &Query<'_>) -> Result<String, BackendError>;
}

/// Backend identity recorded in transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSnapshot {
    pub id: String,
    pub kind: BackendKind,
    pub model: Option<String>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    ChatCompletionHttp,
    Scripted,
    FixedAction,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::ChatCompletionHttp => "chat-completion-http",
            BackendKind::Scripted => "scripted",
            BackendKind::FixedAction => "fixed-action",
        })
    }
}

fn default_id() -> String {
    "default".into()
}
fn default_temperature() -> f64 {
    1.0
}
fn default_timeout() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_rate_limit() -> u32 {
    60
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_probability() -> f64 {
    0.5
}

/// Backend settings as written in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub kind: BackendKind,

    // chat-completion-http
    pub model: Option<String>,
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_rate_limit")]
    pub requests_per_minute: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,

    // fixed-action
    /// Profile code answered every time, e.g. `TCC` or `CTCC`.
    pub profile: Option<String>,

    // scripted
    pub seed: Option<u64>,
    /// Per-replication list of per-round profile codes; replication `k` uses
    /// entry `k mod len`, and the last round's profile is held if the game is
    /// longer than the script.
    pub script: Option<Vec<Vec<String>>>,
    #[serde(default = "default_probability")]
    pub p_trust: f64,
    #[serde(default = "default_probability")]
    pub p_developer_comply: f64,
    #[serde(default = "default_probability")]
    pub p_regulator_comply: f64,
    /// Probability that a reply carries no usable label.
    #[serde(default)]
    pub p_garbled: f64,
}

impl BackendConfig {
    fn base(kind: BackendKind) -> Self {
        BackendConfig {
            id: default_id(),
            kind,
            model: None,
            endpoint: None,
            api_key_env: None,
            temperature: default_temperature(),
            timeout_secs: default_timeout(),
            max_retries: default_max_retries(),
            requests_per_minute: default_rate_limit(),
            backoff_base_ms: default_backoff_ms(),
            profile: None,
            seed: None,
            script: None,
            p_trust: default_probability(),
            p_developer_comply: default_probability(),
            p_regulator_comply: default_probability(),
            p_garbled: 0.0,
        }
    }

    pub fn fixed(profile: &str) -> Self {
        BackendConfig {
            profile: Some(profile.to_string()),
            ..Self::base(BackendKind::FixedAction)
        }
    }

    pub fn scripted_random(seed: u64) -> Self {
        BackendConfig {
            seed: Some(seed),
            ..Self::base(BackendKind::Scripted)
        }
    }

    pub fn scripted(script: Vec<Vec<&str>>) -> Self {
        BackendConfig {
            script: Some(
                script
                    .into_iter()
                    .map(|g| g.into_iter().map(str::to_string).collect())
                    .collect(),
            ),
            ..Self::base(BackendKind::Scripted)
        }
    }

    pub fn http(model: &str, endpoint: &str, api_key_env: &str) -> Self {
        BackendConfig {
            model: Some(model.to_string()),
            endpoint: Some(endpoint.to_string()),
            api_key_env: Some(api_key_env.to_string()),
            ..Self::base(BackendKind::ChatCompletionHttp)
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let err = |m: &str| Err(BackendError::Config(format!("{}: {m}", self.id)));
        if self.id.is_empty() {
            return err("id must not be empty");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return err("temperature must be non-negative");
        }
        match self.kind {
            BackendKind::ChatCompletionHttp => {
                if self.model.as_deref().unwrap_or("").is_empty() {
                    return err("chat-completion-http needs `model`");
                }
                if self.endpoint.as_deref().unwrap_or("").is_empty() {
                    return err("chat-completion-http needs `endpoint`");
                }
                if self.api_key_env.as_deref().unwrap_or("").is_empty() {
                    return err("chat-completion-http needs `api_key_env`");
                }
                if self.requests_per_minute == 0 {
                    return err("requests_per_minute must be positive");
                }
            }
            BackendKind::FixedAction => match &self.profile {
                None => return err("fixed-action needs `profile`"),
                Some(code) => {
                    ActionProfile::parse_code(code)
                        .map_err(|e| BackendError::Config(e.to_string()))?;
                }
            },
            BackendKind::Scripted => {
                match (&self.script, self.seed) {
                    (None, None) => return err("scripted needs `seed` or `script`"),
                    (Some(s), _) if s.is_empty() || s.iter().any(Vec::is_empty) => {
                        return err("script entries must be non-empty")
                    }
                    _ => {}
                }
                if let Some(script) = &self.script {
                    for code in script.iter().flatten() {
                        ActionProfile::parse_code(code)
                            .map_err(|e| BackendError::Config(e.to_string()))?;
                    }
                }
                for p in [
                    self.p_trust,
                    self.p_developer_comply,
                    self.p_regulator_comply,
                    self.p_garbled,
                ] {
                    if !(0.0..=1.0).contains(&p) {
                        return err("probabilities must lie in [0, 1]");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::FixedAction => {
                Arc::new(FixedActionBackend::new(&self.id, self.parsed_profile()))
            }
            BackendKind::Scripted => Arc::new(ScriptedBackend::from_config(self)),
            BackendKind::ChatCompletionHttp => Arc::new(HttpBackend::new(self.clone())?),
        })
    }

    fn parsed_profile(&self) -> ActionProfile {
        ActionProfile::parse_code(self.profile.as_deref().unwrap_or_default()).expect("validated")
    }

    pub fn snapshot(&self) -> BackendSnapshot {
        BackendSnapshot {
            id: self.id.clone(),
            kind: self.kind,
            model: self.model.clone(),
            temperature: self.temperature,
        }
    }
}

/// Backends by id.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn Backend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_configs(configs: &[BackendConfig]) -> Result<Self, BackendError> {
        let mut reg = Self::new();
        for c in configs {
            reg.insert(c.build()?);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, backend: Arc<dyn Backend>) {
        self.backends.insert(backend.id().to_string(), backend);
    }

    pub fn get(&self, id: &str) -> Result<&Arc<dyn Backend>, BackendError> {
        self.backends
            .get(id)
            .ok_or_else(|| BackendError::Unknown(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}

fn reply_for(action: Action, mode: TrustMode) -> String {
    format!("{ANSWER_MARKER} {}", action.label(mode))
}

/// Always plays the same profile.
pub struct FixedActionBackend {
    id: String,
    profile: ActionProfile,
}

impl FixedActionBackend {
    pub fn new(id: &str, profile: ActionProfile) -> Self {
        FixedActionBackend {
            id: id.to_string(),
            profile,
        }
    }
}

impl Backend for FixedActionBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn snapshot(&self) -> BackendSnapshot {
        BackendSnapshot {
            id: self.id.clone(),
            kind: BackendKind::FixedAction,
            model: None,
            temperature: 0.0,
        }
    }

    fn complete(&self, q: &Query<'_>) -> Result<String, BackendError> {
        Ok(reply_for(self.profile.action(q.role), q.mode))
    }
}

/// Deterministic offline backend: either replays a profile script or draws
/// actions at random from a seeded stream keyed by
/// `(seed, game seed, round, role, attempt)`.
pub struct ScriptedBackend {
    id: String,
    seed: u64,
    script: Option<Vec<Vec<ActionProfile>>>,
    p_coop: [f64; 3],
    p_garbled: f64,
}

impl ScriptedBackend {
    pub fn from_config(c: &BackendConfig) -> Self {
        let script = c.script.as_ref().map(|games| {
            games
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|code| ActionProfile::parse_code(code).expect("validated"))
                        .collect()
                })
                .collect()
        });
        ScriptedBackend {
            id: c.id.clone(),
            seed: c.seed.unwrap_or(0),
            script,
            p_coop: [c.p_trust, c.p_developer_comply, c.p_regulator_comply],
            p_garbled: c.p_garbled,
        }
    }

    fn rng(&self, q: &Query<'_>) -> ChaCha8Rng {
        let key = mix(&[
            self.seed,
            q.game_seed,
            u64::from(q.round),
            q.role.index() as u64,
            u64::from(q.attempt),
        ]);
        ChaCha8Rng::seed_from_u64(key)
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn snapshot(&self) -> BackendSnapshot {
        BackendSnapshot {
            id: self.id.clone(),
            kind: BackendKind::Scripted,
            model: None,
            temperature: 0.0,
        }
    }

    fn complete(&self, q: &Query<'_>) -> Result<String, BackendError> {
        if let Some(script) = &self.script {
            let game = &script[q.replication as usize % script.len()];
            let idx = (q.round as usize).saturating_sub(1).min(game.len() - 1);
            return Ok(reply_for(game[idx].action(q.role), q.mode));
        }
        let mut rng = self.rng(q);
        if rng.random_bool(self.p_garbled) {
            return Ok("Let me think about the incentives here.".to_string());
        }
        let [coop, other] = Action::options(q.role);
        let action = if rng.random_bool(self.p_coop[q.role.index()]) {
            coop
        } else {
            other
        };
        Ok(format!(
            "Weighing the payoffs as the {}, I settle on this.\n{}",
            q.role,
            reply_for(action, q.mode)
        ))
    }
}

/// SplitMix64 folded over `parts`.
pub fn mix(parts: &[u64]) -> u64 {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        state ^= p;
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

/// Spaces request admissions evenly at `per_minute`.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(per_minute: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs(60) / per_minute.max(1),
            next: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue a request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// OpenAI-style `POST {endpoint}/chat/completions` client with bounded
/// exponential backoff on timeouts, 408, 429 and 5xx.
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let limiter = RateLimiter::per_minute(config.requests_per_minute);
        Ok(HttpBackend {
            config,
            client,
            limiter,
        })
    }

    fn url(&self) -> String {
        let base = self.config.endpoint.as_deref().unwrap_or_default();
        format!("{}/chat/completions", base.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .backoff_base_ms
            .saturating_mul(1 << attempt.min(16));
        Duration::from_millis(ms.min(30_000))
    }
}

fn is_retryable(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn snapshot(&self) -> BackendSnapshot {
        self.config.snapshot()
    }

    fn complete(&self, q: &Query<'_>) -> Result<String, BackendError> {
        let var = self.config.api_key_env.as_deref().unwrap_or_default();
        let key =
            std::env::var(var).map_err(|_| BackendError::MissingCredential(var.to_string()))?;
        let body = ChatRequest {
            model: self.config.model.as_deref().unwrap_or_default(),
            messages: q.messages,
            temperature: self.config.temperature,
        };
        let url = self.url();
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.backoff(attempt - 1));
            }
            self.limiter.acquire();
            let sent = self.client.post(&url).bearer_auth(&key).json(&body).send();
            let resp = match sent {
                Ok(r) => r,
                Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                    log::debug!("{}: attempt {attempt} failed: {e}", self.config.id);
                    last = e.to_string();
                    continue;
                }
                Err(e) => return Err(BackendError::Malformed(e.to_string())),
            };
            let status = resp.status().as_u16();
            let text = resp.text().unwrap_or_default();
            if (200..300).contains(&status) {
                let parsed: ChatResponse = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Malformed(e.to_string()))?;
                return parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| BackendError::Malformed("no choices in response".into()));
            }
            if !is_retryable(status) {
                return Err(BackendError::Http { status, body: text });
            }
            log::debug!("{}: attempt {attempt} got {status}", self.config.id);
            last = format!("status {status}: {text}");
        }
        Err(BackendError::Exhausted { attempts, last })
    }
}
