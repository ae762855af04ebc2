//! Uniform chat-model access: a live chat-completions client with retry,
//! and a deterministic scripted backend for tests and golden traces.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::conversation::{ChatMessage, Phase, Role};

/// One completion request: the message history plus sampling parameters.
#[derive(Clone, Debug)]
pub struct ModelRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub n_samples: usize,
}

impl ModelRequest {
    pub fn single(messages: Vec<ChatMessage>, temperature: f64, max_new_tokens: usize) -> Self {
        ModelRequest {
            messages,
            temperature,
            max_new_tokens,
            n_samples: 1,
        }
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.n_samples == 0 {
            return Err(GatewayError::InvalidRequest("n_samples must be >= 1".into()));
        }
        if self.n_samples >= 2 && self.temperature <= 0.0 {
            return Err(GatewayError::InvalidRequest(
                "sampling multiple completions requires temperature > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ModelResponse {
    pub completions: Vec<String>,
    pub generated_tokens: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failure after retries: {0}")]
    Transport(String),
    #[error("no scripted rule matches the request (last phase {last_phase}, tail: {tail:?})")]
    NoMatchingRule { last_phase: String, tail: String },
    #[error("context too long for the model")]
    ContextTooLong,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A chat-model backend. Implementations are shareable handles safe for
/// concurrent `complete` calls.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError>;
}

/// Whitespace-delimited token count (the scripted backend's accounting).
pub fn whitespace_tokens(texts: &[&str]) -> u64 {
    texts
        .iter()
        .map(|t| t.split_whitespace().count() as u64)
        .sum()
}

// ---------------------------------------------------------------------------
// scripted backend
// ---------------------------------------------------------------------------

/// One scripted rule. `phase` matches the last message of the request;
/// `pattern` is a substring test against the whole conversation text.
/// `responses` with several entries are served in rotation so repeated
/// hits (or multi-sample requests) can script diverse outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<String>,
}

impl ScriptRule {
    pub fn on_phase(phase: Phase, response: impl Into<String>) -> Self {
        ScriptRule {
            phase: Some(phase),
            pattern: None,
            responses: vec![response.into()],
        }
    }

    pub fn on_pattern(
        phase: Option<Phase>,
        pattern: impl Into<String>,
        response: impl Into<String>,
    ) -> Self {
        ScriptRule {
            phase,
            pattern: Some(pattern.into()),
            responses: vec![response.into()],
        }
    }

    pub fn cycling(phase: Option<Phase>, pattern: Option<String>, responses: Vec<String>) -> Self {
        ScriptRule {
            phase,
            pattern,
            responses,
        }
    }

    fn matches(&self, last_phase: Phase, full_text: &str) -> bool {
        if let Some(p) = self.phase {
            if p != last_phase {
                return false;
            }
        }
        if let Some(pat) = &self.pattern {
            if !full_text.contains(pat.as_str()) {
                return false;
            }
        }
        true
    }
}

/// An ordered rule list with an optional catch-all default.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

impl ScriptedPolicy {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let data = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&data).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Deterministic test double: replies come from the first matching rule.
pub struct ScriptedBackend {
    policy: ScriptedPolicy,
    // rotation counters, one per rule; index len() is the default's counter
    counters: Mutex<Vec<usize>>,
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy) -> Self {
        let counters = Mutex::new(vec![0; policy.rules.len() + 1]);
        ScriptedBackend { policy, counters }
    }

    fn next_response(&self, req: &ModelRequest) -> Result<String, GatewayError> {
        let last = req.messages.last().expect("validated non-empty");
        let full_text: String = req
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        for (i, rule) in self.policy.rules.iter().enumerate() {
            if rule.responses.is_empty() {
                continue;
            }
            if rule.matches(last.phase, &full_text) {
                let mut counters = self.counters.lock().expect("counter lock");
                let n = counters[i];
                counters[i] += 1;
                // stick at the last response once the rotation is spent
                let idx = n.min(rule.responses.len() - 1);
                return Ok(rule.responses[idx].clone());
            }
        }
        if let Some(default) = &self.policy.default {
            return Ok(default.clone());
        }
        let tail: String = last.content.chars().take(80).collect();
        Err(GatewayError::NoMatchingRule {
            last_phase: last.phase.as_str().to_string(),
            tail,
        })
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let mut completions = Vec::with_capacity(req.n_samples);
        for _ in 0..req.n_samples {
            completions.push(self.next_response(req)?);
        }
        let refs: Vec<&str> = completions.iter().map(|s| s.as_str()).collect();
        let generated_tokens = whitespace_tokens(&refs);
        Ok(ModelResponse {
            completions,
            generated_tokens,
        })
    }
}

// ---------------------------------------------------------------------------
// live backend
// ---------------------------------------------------------------------------

/// Connection settings for a chat-completions style endpoint. The API key
/// comes from the named environment variable and is never logged.
#[derive(Clone, Debug)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_attempts: usize,
    pub initial_backoff: Duration,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        LiveConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: "CHATCOT_API_KEY".into(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    n: usize,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: String,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

/// Live JSON-over-HTTP client. Agent messages go out as `user`, model
/// messages as `assistant`. Transient transport failures are retried with
/// exponential backoff, at most `max_attempts` tries total.
pub struct LiveBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        LiveBackend {
            config,
            client: reqwest::blocking::Client::new(),
        }
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.config.api_key_env).ok().filter(|k| !k.is_empty())
    }

    fn send_once(&self, req: &ModelRequest) -> Result<ModelResponse, SendFailure> {
        let messages: Vec<WireMessage> = req
            .messages
            .iter()
            .map(|m| WireMessage {
                role: match m.role {
                    Role::Agent => "user",
                    Role::Model => "assistant",
                },
                content: &m.content,
            })
            .collect();
        let body = WireRequest {
            model: &self.config.model,
            messages,
            temperature: req.temperature,
            n: req.n_samples,
            max_tokens: req.max_new_tokens,
        };
        let mut http = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = self.api_key() {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| SendFailure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(SendFailure::Transient(format!("server error {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            let lowered = text.to_lowercase();
            if lowered.contains("context") && (lowered.contains("length") || lowered.contains("long"))
                || lowered.contains("maximum context")
            {
                return Err(SendFailure::Fatal(GatewayError::ContextTooLong));
            }
            return Err(SendFailure::Fatal(GatewayError::Transport(format!(
                "status {status}: {text}"
            ))));
        }
        let parsed: WireResponse = resp
            .json()
            .map_err(|e| SendFailure::Fatal(GatewayError::Transport(e.to_string())))?;
        if parsed.choices.is_empty() {
            return Err(SendFailure::Fatal(GatewayError::Transport(
                "response carries no choices".into(),
            )));
        }
        Ok(ModelResponse {
            completions: parsed
                .choices
                .into_iter()
                .map(|c| c.message.content.trim().to_string())
                .collect(),
            generated_tokens: parsed.usage.unwrap_or_default().completion_tokens,
        })
    }
}

enum SendFailure {
    Transient(String),
    Fatal(GatewayError),
}

impl ChatBackend for LiveBackend {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let mut backoff = self.config.initial_backoff;
        let mut last_error = String::new();
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.send_once(req) {
                Ok(resp) => return Ok(resp),
                Err(SendFailure::Fatal(e)) => return Err(e),
                Err(SendFailure::Transient(msg)) => {
                    tracing::warn!(attempt, error = %msg, "transient transport failure");
                    last_error = msg;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(GatewayError::Transport(last_error))
    }
}
