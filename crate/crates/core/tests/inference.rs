use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use persona_core::llm::{
    build_prompt, infer_batch, infer_traits, parse_response, redact_names, AuditLog, ChatProvider,
    InferenceError, MockProvider, OpenAiCompatibleProvider, ParseErrorKind, ProviderConfig,
    RetryPolicy, Secret, FORMAT_SCHEMA, NAME_TOKEN,
};
use persona_core::{Trait, TraitLevel};
use proptest::prelude::*;
use regex::Regex;

struct Captured {
    path: String,
    headers: Vec<String>,
    body: serde_json::Value,
}

/// One-connection-per-request HTTP stub answering with the scripted statuses in order.
fn stub(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, reply) in script {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Captured {
                path: request_line.split_whitespace().nth(1).unwrap_or("").to_string(),
                headers,
                body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            });
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn completion(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"total_tokens": 42}
    })
    .to_string()
}

const GOOD: &str = r#"{"Openness": "high", "Conscientiousness": "low", "Extroversion": "high", "Agreeableness": "high", "Neuroticism": "low"}"#;

fn live(base_url: String, backoff_ms: u64) -> OpenAiCompatibleProvider {
    OpenAiCompatibleProvider::new(ProviderConfig {
        base_url,
        api_key: Some(Secret::new("sk-test-secret-123")),
        initial_backoff: Duration::from_millis(backoff_ms),
        timeout: Duration::from_secs(5),
        ..ProviderConfig::default()
    })
    .unwrap()
}

fn fast_policy() -> RetryPolicy {
    RetryPolicy {
        max_retries: 2,
        initial_backoff: Duration::from_millis(5),
    }
}

#[test]
fn golden_prompt() {
    let b = build_prompt("Hi! I'm into chess.", "gpt-4o-mini").unwrap();
    assert_eq!(
        b.system_text,
        "You are an expert in inferring students' Big-5 personality traits from text that they have written."
    );
    let prefix = "For the given text sample, infer the author's personality traits and return your results in the following format without explanation: ";
    assert_eq!(b.user_text, format!("{prefix}{FORMAT_SCHEMA}Hi! I'm into chess."));
    assert_eq!(b.temperature, 0.0);
    assert!(matches!(build_prompt("   \n", "m"), Err(InferenceError::EmptyText)));
}

#[test]
fn wire_request_shape() {
    let (url, seen) = stub(vec![(200, completion(GOOD))]);
    let p = live(url, 5);
    let r = infer_traits(&p, "Hello, I am Priya and I love hiking.", &["Priya".to_string()], &fast_policy()).unwrap();
    assert_eq!(r.level(Trait::Openness), TraitLevel::High);
    assert_eq!(r.provenance.temperature, 0.0);
    assert_eq!(p.token_count(), 42);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    let req = &seen[0];
    assert_eq!(req.path, "/v1/chat/completions");
    assert!(req.headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test-secret-123")));
    assert_eq!(req.body["temperature"], serde_json::json!(0.0));
    assert_eq!(req.body["model"], "gpt-4o-mini");
    assert_eq!(req.body["messages"][0]["role"], "system");
    assert_eq!(req.body["messages"][1]["role"], "user");
    let user = req.body["messages"][1]["content"].as_str().unwrap();
    assert!(user.ends_with(&format!("Hello, I am {NAME_TOKEN} and I love hiking.")));
    assert!(!user.contains("Priya"));
}

#[test]
fn transient_errors_are_retried_then_succeed() {
    let (url, seen) = stub(vec![(503, "{}".into()), (429, "{}".into()), (200, completion(GOOD))]);
    let p = live(url, 5);
    assert!(infer_traits(&p, "hi there", &[], &fast_policy()).is_ok());
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let (url, seen) = stub(vec![(500, "{}".into()), (502, "{}".into()), (503, "{}".into())]);
    let p = live(url, 5);
    match infer_traits(&p, "hi there", &[], &fast_policy()) {
        Err(InferenceError::ProviderUnavailable { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert_eq!(last.status, Some(503));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_and_bad_replies_are_not_retried() {
    let (url, seen) = stub(vec![(400, "{}".into())]);
    let p = live(url, 5);
    assert!(matches!(
        infer_traits(&p, "hi", &[], &fast_policy()),
        Err(InferenceError::ProviderUnavailable { attempts: 1, .. })
    ));
    assert_eq!(seen.lock().unwrap().len(), 1);

    let (url, seen) = stub(vec![(200, completion("I think they are friendly."))]);
    let p = live(url, 5);
    assert!(matches!(infer_traits(&p, "hi", &[], &fast_policy()), Err(InferenceError::Parse(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_is_retryable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let p = live(format!("http://{addr}/v1"), 5);
    match infer_traits(&p, "hi", &[], &fast_policy()) {
        Err(InferenceError::ProviderUnavailable { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(last.retryable);
        }
        other => panic!("{other:?}"),
    }
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn audit_log_has_no_secrets_or_names() {
    let (url, _) = stub(vec![(200, completion(GOOD))]);
    let buf = SharedBuf::default();
    let roster = vec!["Priya".to_string()];
    let p = live(url, 5).with_audit(AuditLog::new(Box::new(buf.clone()), roster.clone()));
    infer_traits(&p, "Hello, I am Priya.", &roster, &fast_policy()).unwrap();
    let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
    assert!(!text.is_empty());
    assert!(!text.contains("sk-test-secret-123"));
    assert!(!text.contains("Priya"));
    assert!(!format!("{p:?}").contains("sk-test-secret-123"));
}

#[test]
fn mock_matches_python_sha256_parity() {
    // python: hashlib.sha256((trait_name + text).encode()).digest()[0] & 1
    let frozen: [(&str, [u8; 5]); 3] = [
        ("hello", [1, 0, 1, 0, 1]),
        ("I love hiking and chess.", [1, 1, 1, 0, 0]),
        ("Hi everyone! I am [NAME] from Atlanta.", [1, 0, 1, 1, 0]),
    ];
    let mock = MockProvider::default();
    for (text, bits) in frozen {
        let levels = mock.levels(text);
        for t in Trait::ALL {
            let want = if bits[t.index()] == 1 { TraitLevel::High } else { TraitLevel::Low };
            assert_eq!(levels.get(t), want, "{t} on {text:?}");
        }
        let via_api = infer_traits(&mock, text, &[], &RetryPolicy::default()).unwrap();
        assert_eq!(via_api.levels, levels);
    }
}

#[test]
fn batch_keeps_order_and_matches_sequential() {
    let mock = MockProvider::default();
    let texts: Vec<String> = (0..40).map(|i| format!("post number {i}")).collect();
    let batch = infer_batch(&mock, &texts, &[], &RetryPolicy::default(), 4);
    for (t, r) in texts.iter().zip(batch) {
        assert_eq!(r.unwrap(), infer_traits(&mock, t, &[], &RetryPolicy::default()).unwrap());
    }
}

#[test]
fn parser_accepts_common_variants() {
    let fenced = format!("```json\n{GOOD}\n```");
    assert_eq!(parse_response(&fenced).unwrap(), parse_response(GOOD).unwrap());
    let shouty = GOOD.replace("high", " HIGH ").replace("Openness", "openness");
    assert_eq!(parse_response(&shouty).unwrap(), parse_response(GOOD).unwrap());
    let missing = r#"{"Openness": "high"}"#;
    assert!(matches!(parse_response(missing).unwrap_err().kind, ParseErrorKind::MissingTrait(_)));
    let middle = GOOD.replacen("low", "medium", 1);
    assert!(matches!(parse_response(&middle).unwrap_err().kind, ParseErrorKind::InvalidValue { .. }));
    let dup = GOOD.replace("}", r#", "openness": "low"}"#);
    assert!(matches!(parse_response(&dup).unwrap_err().kind, ParseErrorKind::DuplicateTrait(_)));
}

fn regex_redact(text: &str, roster: &[String]) -> String {
    let mut names: Vec<&String> = roster.iter().filter(|n| !n.is_empty()).collect();
    if names.is_empty() {
        return text.to_string();
    }
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));
    let alt: Vec<String> = names.iter().map(|n| regex::escape(n)).collect();
    let re = Regex::new(&format!(r"(?i)\b(?:{})\b", alt.join("|"))).unwrap();
    re.replace_all(text, NAME_TOKEN).into_owned()
}

proptest! {
    #[test]
    fn redaction_matches_regex_oracle(
        names in prop::collection::vec("[A-Z][a-z]{1,6}", 0..4),
        words in prop::collection::vec(prop_oneof!["[a-z]{1,8}", "[A-Z][a-z]{1,6}", Just(",".to_string()), Just("!".to_string())], 0..20),
    ) {
        let mut text_words = words.clone();
        for (i, n) in names.iter().enumerate() {
            text_words.insert((i * 3).min(text_words.len()), n.to_lowercase());
        }
        let text = text_words.join(" ");
        prop_assert_eq!(redact_names(&text, &names), regex_redact(&text, &names));
    }
}

#[test]
fn missing_names_are_caught_before_sending() {
    struct Spy(Mutex<Vec<String>>);
    impl ChatProvider for Spy {
        fn id(&self) -> &str { "spy" }
        fn model(&self) -> &str { "spy" }
        fn complete(&self, p: &persona_core::llm::PromptBundle) -> Result<String, persona_core::llm::TransportError> {
            self.0.lock().unwrap().push(p.user_text.clone());
            Ok(GOOD.to_string())
        }
    }
    let spy = Spy(Mutex::new(Vec::new()));
    infer_traits(&spy, "Jo and JOHN_DOE met Jo-Ann", &["Jo".to_string(), "John_Doe".to_string()], &RetryPolicy::default()).unwrap();
    let sent = spy.0.lock().unwrap()[0].clone();
    assert!(!sent.contains("JOHN_DOE"));
    assert!(sent.contains(&format!("{NAME_TOKEN} and {NAME_TOKEN} met")));
}
