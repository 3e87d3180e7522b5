//! Zero-shot trait inference through a chat-completion model.
//!
//! The flow for one post is: redact roster names, build the fixed prompt, send it
//! to a [`ChatProvider`] (retrying transient transport failures), and parse the
//! five low/high labels out of the reply.

mod audit;
mod parse;
mod prompt;
mod provider;
mod redact;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use audit::AuditLog;
pub use parse::{parse_response, ParseError, ParseErrorKind};
pub use prompt::{build_prompt, PromptBundle, DEFAULT_MODEL, FORMAT_SCHEMA, SYSTEM_TEXT, USER_PREFIX};
pub use provider::{
    chat_request_body, mock_level, ChatProvider, MockProvider, OpenAiCompatibleProvider,
    ProviderConfig, Secret, TransportError,
};
pub use redact::{contains_roster_name, redact_names, NAME_TOKEN};

use crate::binning::TraitLevel;
use crate::traits::Trait;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferenceError {
    #[error("post text is empty")]
    EmptyText,
    #[error("provider unavailable after {attempts} attempt(s): {last}")]
    ProviderUnavailable { attempts: u32, last: TransportError },
    #[error("unparseable model response: {0}")]
    Parse(#[from] ParseError),
    #[error("outgoing prompt still contains a roster name")]
    PiiLeak,
}

/// Five binary levels in canonical order. `Middle` is never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraitLevels([TraitLevel; 5]);

impl TraitLevels {
    /// `None` if any level is `Middle`.
    pub fn new(levels: [TraitLevel; 5]) -> Option<Self> {
        levels
            .iter()
            .all(|&l| l != TraitLevel::Middle)
            .then_some(Self(levels))
    }

    pub fn from_fn(mut f: impl FnMut(Trait) -> TraitLevel) -> Option<Self> {
        Self::new(Trait::ALL.map(&mut f))
    }

    pub fn get(&self, t: Trait) -> TraitLevel {
        self.0[t.index()]
    }

    pub fn as_array(&self) -> [TraitLevel; 5] {
        self.0
    }

    /// Compact JSON in canonical order, e.g. `{"Openness":"high",...}`.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

impl Serialize for TraitLevels {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(5))?;
        for t in Trait::ALL {
            map.serialize_entry(t.name(), self.get(t).name())?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for TraitLevels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, String>::deserialize(d)?;
        let json = serde_json::to_string(&map).map_err(serde::de::Error::custom)?;
        parse_response(&json).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider: String,
    pub model: String,
    pub timestamp_ms: u64,
    pub temperature: f64,
    /// Provider defaults apply to max tokens and stop sequences; none are sent.
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub levels: TraitLevels,
    pub provenance: Provenance,
}

impl InferenceResult {
    pub fn level(&self, t: Trait) -> TraitLevel {
        self.levels.get(t)
    }
}

impl fmt::Display for InferenceResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = Trait::ALL
            .iter()
            .map(|&t| format!("{}={}", t.letter(), self.level(t)))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Exponential backoff for transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "duration_ms")]
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff.saturating_mul(1u32 << retry.min(16))
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Infer the five levels for one post.
///
/// Names from `roster` are redacted first and the outgoing prompt is checked for
/// leftovers. Transport failures marked retryable are retried per `policy`;
/// parse failures are returned immediately.
pub fn infer_traits(
    provider: &dyn ChatProvider,
    text: &str,
    roster: &[String],
    policy: &RetryPolicy,
) -> Result<InferenceResult, InferenceError> {
    let redacted = redact_names(text, roster);
    let bundle = build_prompt(&redacted, provider.model())?;
    if contains_roster_name(&bundle.user_text, roster) {
        return Err(InferenceError::PiiLeak);
    }
    let mut attempt = 0;
    let raw = loop {
        attempt += 1;
        match provider.complete(&bundle) {
            Ok(raw) => break raw,
            Err(e) if e.retryable && attempt <= policy.max_retries => {
                std::thread::sleep(policy.backoff(attempt - 1));
            }
            Err(e) => {
                return Err(InferenceError::ProviderUnavailable {
                    attempts: attempt,
                    last: e,
                })
            }
        }
    };
    let levels = parse_response(&raw)?;
    Ok(InferenceResult {
        levels,
        provenance: Provenance {
            provider: provider.id().to_string(),
            model: provider.model().to_string(),
            timestamp_ms: provider.now_ms(),
            temperature: bundle.temperature,
            max_tokens: None,
        },
    })
}

/// Run [`infer_traits`] over many posts with at most `max_in_flight` concurrent calls.
/// Results are returned in input order.
pub fn infer_batch(
    provider: &dyn ChatProvider,
    texts: &[String],
    roster: &[String],
    policy: &RetryPolicy,
    max_in_flight: usize,
) -> Vec<Result<InferenceResult, InferenceError>> {
    let workers = max_in_flight.max(1).min(texts.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<InferenceResult, InferenceError>>>> =
        Mutex::new(vec![None; texts.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= texts.len() {
                    break;
                }
                let r = infer_traits(provider, &texts[i], roster, policy);
                slots.lock().expect("slots lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        failures: u32,
        retryable: bool,
        calls: AtomicU32,
        reply: String,
    }

    impl ChatProvider for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn model(&self) -> &str {
            "test-model"
        }
        fn complete(&self, _: &PromptBundle) -> Result<String, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(TransportError {
                    retryable: self.retryable,
                    status: Some(503),
                    message: "unavailable".into(),
                })
            } else {
                Ok(self.reply.clone())
            }
        }
    }

    const OK: &str = r#"{"Openness":"high","Conscientiousness":"high","Extroversion":"low","Agreeableness":"high","Neuroticism":"low"}"#;

    fn fast() -> RetryPolicy {
        RetryPolicy {
            max_retries: 2,
            initial_backoff: Duration::from_millis(1),
        }
    }

    fn flaky(failures: u32, retryable: bool, reply: &str) -> Flaky {
        Flaky {
            failures,
            retryable,
            calls: AtomicU32::new(0),
            reply: reply.into(),
        }
    }

    #[test]
    fn retries_transient_failures() {
        let p = flaky(2, true, OK);
        let r = infer_traits(&p, "hi", &[], &fast()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
        assert_eq!(r.levels.canonical_json(), OK);
        assert_eq!(r.provenance.provider, "flaky");
        assert_eq!(r.provenance.temperature, 0.0);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let p = flaky(10, true, OK);
        let e = infer_traits(&p, "hi", &[], &fast()).unwrap_err();
        assert!(matches!(e, InferenceError::ProviderUnavailable { attempts: 3, .. }));
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn permanent_failures_not_retried() {
        let p = flaky(1, false, OK);
        assert!(infer_traits(&p, "hi", &[], &fast()).is_err());
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn parse_failures_not_retried() {
        let p = flaky(0, true, r#"{"Openness":"medium"}"#);
        let e = infer_traits(&p, "hi", &[], &fast()).unwrap_err();
        assert!(matches!(e, InferenceError::Parse(ref pe) if pe.raw.contains("medium")));
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(0), Duration::from_secs(1));
        assert_eq!(p.backoff(1), Duration::from_secs(2));
        assert_eq!(p.backoff(2), Duration::from_secs(4));
    }

    #[test]
    fn levels_reject_middle() {
        assert!(TraitLevels::new([TraitLevel::Middle; 5]).is_none());
        let l = TraitLevels::new([TraitLevel::High; 5]).unwrap();
        let back: TraitLevels = serde_json::from_str(&l.canonical_json()).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn batch_preserves_order() {
        let mock = MockProvider::default();
        let texts: Vec<String> = (0..23).map(|i| format!("post number {i}")).collect();
        let batch = infer_batch(&mock, &texts, &[], &fast(), 4);
        for (t, r) in texts.iter().zip(batch) {
            let single = infer_traits(&mock, t, &[], &fast()).unwrap();
            assert_eq!(r.unwrap(), single);
        }
    }
}
