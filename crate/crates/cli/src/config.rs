//! Application configuration, loaded from TOML. The provider API key is never
//! read from the file; it comes from the environment variable named in
//! `provider.api_key_env`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use persona_core::llm::{ChatProvider, MockProvider, OpenAiCompatibleProvider, ProviderConfig};
use persona_core::matchmaking::MatchConfig;
use persona_core::Scale;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Deterministic offline provider derived from a hash of the post.
    #[default]
    Mock,
    /// OpenAI-compatible chat completions endpoint.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    /// Share of trait labels the mock takes from a synthetic post's generation tag.
    pub mock_correlation: f64,
    #[serde(flatten)]
    pub live: ProviderConfig,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            mock_correlation: 0.0,
            live: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingSection {
    #[serde(flatten)]
    pub weights: MatchConfig,
    /// Recompute the personality multiplier from the cohort when loading it.
    pub auto_calibrate: bool,
    pub top_k: usize,
}

impl Default for MatchingSection {
    fn default() -> Self {
        Self {
            weights: MatchConfig::default(),
            auto_calibrate: false,
            top_k: persona_core::matchmaking::DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    /// JSON snapshot of all student records; nothing is persisted when unset.
    pub snapshot: Option<PathBuf>,
    /// JSONL log of provider requests and replies, names scrubbed.
    pub audit_log: Option<PathBuf>,
    /// Alternative synonym dictionary, checked against the audited checksum.
    pub synonyms: Option<PathBuf>,
    pub allow_synonym_drift: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSection {
    pub bind: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    pub scale: Scale,
    pub provider: ProviderSection,
    pub matching: MatchingSection,
    pub paths: PathsSection,
    pub service: ServiceSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            scale: Scale::Binary,
            provider: ProviderSection::default(),
            matching: MatchingSection::default(),
            paths: PathsSection::default(),
            service: ServiceSection::default(),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        if text.lines().any(|l| l.trim_start().starts_with("api_key ") || l.trim_start().starts_with("api_key=")) {
            bail!("api keys are read from the environment only; remove `api_key` from the config file");
        }
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.scale == Scale::FivePoint {
            bail!("the five-point scale cannot drive matching; use binary or trinary");
        }
        self.provider.live.validate().map_err(anyhow::Error::msg)?;
        if !(0.0..=1.0).contains(&self.provider.mock_correlation) {
            bail!("mock_correlation must lie in [0, 1]");
        }
        let w = &self.matching.weights;
        if !(w.personality_multiplier >= 0.0 && w.personality_multiplier.is_finite()) {
            bail!("personality_multiplier must be a non-negative number");
        }
        if !(w.global_scale > 0.0 && w.global_scale.is_finite()) {
            bail!("global_scale must be positive");
        }
        if self.matching.top_k == 0 {
            bail!("top_k must be at least 1");
        }
        Ok(())
    }

    /// Build the configured provider. Call outside any async runtime.
    pub fn provider(&self) -> anyhow::Result<Arc<dyn ChatProvider>> {
        Ok(match self.provider.kind {
            ProviderKind::Mock => Arc::new(MockProvider::correlated(self.provider.mock_correlation)),
            ProviderKind::Live => {
                let cfg = self.provider.live.clone().with_env_key();
                if cfg.api_key.is_none() {
                    bail!("environment variable {} is not set", cfg.api_key_env);
                }
                let mut p = OpenAiCompatibleProvider::new(cfg).map_err(|e| anyhow::anyhow!(e.message))?;
                if let Some(path) = &self.paths.audit_log {
                    p = p.with_audit(persona_core::llm::AuditLog::open(path, Vec::new())?);
                }
                Arc::new(p)
            }
        })
    }

    pub fn synonyms(&self) -> anyhow::Result<persona_core::presentation::SynonymDictionary> {
        match &self.paths.synonyms {
            None => Ok(persona_core::presentation::SynonymDictionary::builtin()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(persona_core::presentation::SynonymDictionary::from_json(&text, self.paths.allow_synonym_drift)?)
            }
        }
    }
}
