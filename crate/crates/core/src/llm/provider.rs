use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AuditLog, PromptBundle, RetryPolicy, TraitLevels, DEFAULT_MODEL};
use crate::binning::TraitLevel;
use crate::cohort::GenerationTag;
use crate::traits::Trait;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}{}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
pub struct TransportError {
    pub retryable: bool,
    pub status: Option<u16>,
    pub message: String,
}

/// Anything that can answer a [`PromptBundle`] with raw model text.
pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, prompt: &PromptBundle) -> Result<String, TransportError>;

    /// Timestamp recorded in provenance.
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic offline provider.
///
/// Each trait's level is the parity of the first byte of `SHA-256(trait name || post)`:
/// odd is high. When `correlation > 0` and the post carries a synthetic
/// [`GenerationTag`], the level instead follows the tagged mean (above 3.0 is high)
/// for the fraction of traits whose hash-derived uniform draw falls below
/// `correlation`. The output is a pure function of the post text.
#[derive(Debug, Clone, PartialEq)]
pub struct MockProvider {
    pub correlation: f64,
    pub model: String,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self {
            correlation: 0.0,
            model: "mock-hash-v1".to_string(),
        }
    }
}

impl MockProvider {
    pub fn correlated(correlation: f64) -> Self {
        Self {
            correlation: correlation.clamp(0.0, 1.0),
            ..Self::default()
        }
    }

    pub fn levels(&self, text: &str) -> TraitLevels {
        let tag = (self.correlation > 0.0)
            .then(|| GenerationTag::find(text))
            .flatten();
        TraitLevels::from_fn(|t| {
            let digest = trait_digest(t, text);
            if let Some(tag) = &tag {
                let u = u64::from_be_bytes(digest[1..9].try_into().expect("8 bytes")) as f64
                    / 2f64.powi(64);
                let mean = tag.mean(t);
                if u < self.correlation && mean != 3.0 {
                    return if mean > 3.0 { TraitLevel::High } else { TraitLevel::Low };
                }
            }
            parity_level(&digest)
        })
        .expect("only low/high")
    }
}

fn trait_digest(t: Trait, text: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(t.name().as_bytes());
    h.update(text.as_bytes());
    h.finalize().into()
}

fn parity_level(digest: &[u8; 32]) -> TraitLevel {
    if digest[0] & 1 == 1 {
        TraitLevel::High
    } else {
        TraitLevel::Low
    }
}

/// The uncorrelated mock level for one trait.
pub fn mock_level(t: Trait, text: &str) -> TraitLevel {
    parity_level(&trait_digest(t, text))
}

impl ChatProvider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &PromptBundle) -> Result<String, TransportError> {
        let text = prompt.post_text().ok_or_else(|| TransportError {
            retryable: false,
            status: None,
            message: "mock provider received a prompt it did not recognize".into(),
        })?;
        Ok(self.levels(text).canonical_json())
    }

    fn now_ms(&self) -> u64 {
        0
    }
}

/// API key held in memory only; never printed or serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    #[serde(skip)]
    pub api_key: Option<Secret>,
    /// Environment variable the key is read from.
    pub api_key_env: String,
    pub model_name: String,
    #[serde(with = "super::duration_ms", rename = "timeout_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    #[serde(with = "super::duration_ms", rename = "initial_backoff_ms")]
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            api_key: None,
            api_key_env: "OPENAI_API_KEY".to_string(),
            model_name: DEFAULT_MODEL.to_string(),
            timeout: Duration::from_secs(60),
            max_retries: RetryPolicy::default().max_retries,
            initial_backoff: RetryPolicy::default().initial_backoff,
            max_in_flight: 4,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        if self.base_url.trim().is_empty() {
            return Err("base_url is empty".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        Ok(())
    }

    /// Fill `api_key` from the configured environment variable, if set.
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(&self.api_key_env).ok().map(Secret::new);
        self
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff: self.initial_backoff,
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [WireMessage<'a>; 2],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    total_tokens: u64,
}

/// JSON body sent to `{base_url}/chat/completions` for `prompt`.
pub fn chat_request_body(prompt: &PromptBundle) -> serde_json::Value {
    serde_json::to_value(WireRequest {
        model: &prompt.model_name,
        temperature: prompt.temperature,
        messages: [
            WireMessage {
                role: "system",
                content: &prompt.system_text,
            },
            WireMessage {
                role: "user",
                content: &prompt.user_text,
            },
        ],
    })
    .expect("serializable")
}

/// Client for any endpoint speaking the OpenAI chat-completions shape.
pub struct OpenAiCompatibleProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
    audit: Option<AuditLog>,
    requests: AtomicU64,
    tokens: AtomicU64,
}

impl fmt::Debug for OpenAiCompatibleProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiCompatibleProvider")
            .field("base_url", &self.config.base_url)
            .field("model", &self.config.model_name)
            .field("has_api_key", &self.config.api_key.is_some())
            .finish()
    }
}

impl OpenAiCompatibleProvider {
    /// Must be called outside an async runtime (the blocking client owns one).
    pub fn new(config: ProviderConfig) -> Result<Self, TransportError> {
        config.validate().map_err(|m| TransportError {
            retryable: false,
            status: None,
            message: m,
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TransportError {
                retryable: false,
                status: None,
                message: format!("failed to build http client: {e}"),
            })?;
        Ok(Self {
            config,
            client,
            audit: None,
            requests: AtomicU64::new(0),
            tokens: AtomicU64::new(0),
        })
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn token_count(&self) -> u64 {
        self.tokens.load(Ordering::Relaxed)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn send(&self, prompt: &PromptBundle) -> Result<String, TransportError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self.client.post(self.endpoint()).json(&chat_request_body(prompt));
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key.expose());
        }
        let resp = req.send().map_err(|e| TransportError {
            retryable: e.is_timeout() || e.is_connect() || e.is_request(),
            status: None,
            message: format!("request failed: {}", e.without_url()),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError {
                retryable: status.is_server_error() || status.as_u16() == 429,
                status: Some(status.as_u16()),
                message: "provider returned an error status".into(),
            });
        }
        let body: WireResponse = resp.json().map_err(|e| TransportError {
            retryable: false,
            status: Some(status.as_u16()),
            message: format!("malformed completion envelope: {}", e.without_url()),
        })?;
        if let Some(u) = body.usage {
            self.tokens.fetch_add(u.total_tokens, Ordering::Relaxed);
        }
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError {
                retryable: false,
                status: Some(status.as_u16()),
                message: "completion has no message content".into(),
            })
    }
}

impl ChatProvider for OpenAiCompatibleProvider {
    fn id(&self) -> &str {
        "openai-compatible"
    }

    fn model(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, prompt: &PromptBundle) -> Result<String, TransportError> {
        let out = self.send(prompt);
        if let Some(audit) = &self.audit {
            let _ = audit.record(self.id(), prompt, out.as_deref().map_err(|e| e.clone()));
        }
        out
    }
}
