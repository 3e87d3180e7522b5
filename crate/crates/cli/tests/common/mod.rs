#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

pub const TRAITS: [&str; 5] = ["Openness", "Conscientiousness", "Extroversion", "Agreeableness", "Neuroticism"];

/// Published BFI-44 key: items per trait and reverse-keyed items, 1-based, O C E A N.
pub const KEY: [(&[usize], &[usize]); 5] = [
    (&[5, 10, 15, 20, 25, 30, 35, 40, 41, 44], &[35, 41]),
    (&[3, 8, 13, 18, 23, 28, 33, 38, 43], &[8, 18, 23, 43]),
    (&[1, 6, 11, 16, 21, 26, 31, 36], &[6, 21, 31]),
    (&[2, 7, 12, 17, 22, 27, 32, 37, 42], &[2, 12, 27, 37]),
    (&[4, 9, 14, 19, 24, 29, 34, 39], &[9, 24, 34]),
];

pub fn item_walk(answers: &[i64]) -> [i64; 5] {
    KEY.map(|(items, rev)| {
        items
            .iter()
            .map(|&i| if rev.contains(&i) { 6 - answers[i - 1] } else { answers[i - 1] })
            .sum()
    })
}

pub fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/students.jsonl")
}

pub fn fixture_rows() -> Vec<serde_json::Value> {
    std::fs::read_to_string(fixture())
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn persona(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persona"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs")
}

/// High when the low bit of the first byte of SHA-256(trait name || text) is set.
pub fn hash_levels(text: &str) -> [bool; 5] {
    TRAITS.map(|t| {
        let mut h = Sha256::new();
        h.update(t.as_bytes());
        h.update(text.as_bytes());
        h.finalize()[0] & 1 == 1
    })
}

/// `(id, entities)` where entities are `category:value` strings.
pub type Profile = (String, Vec<String>);

/// Every other student's score as `(id, plain, personality)` numerators over n,
/// from scanning all profiles for each shared entity.
pub fn oracle_numerators(profiles: &[Profile], me: &str) -> Vec<(String, u64, u64)> {
    let n = profiles.len() as u64;
    let mine = &profiles.iter().find(|p| p.0 == me).unwrap().1;
    profiles
        .iter()
        .filter(|p| p.0 != me)
        .map(|(id, ents)| {
            let (mut a, mut b) = (0, 0);
            for e in mine.iter().filter(|e| ents.contains(e)) {
                let holders = profiles.iter().filter(|p| p.1.contains(e)).count() as u64;
                if e.starts_with("personality:") {
                    b += n - holders;
                } else {
                    a += n - holders;
                }
            }
            (id.clone(), a, b)
        })
        .collect()
}

/// Ranked ids with unit personality multiplier: descending numerator, then id.
pub fn oracle_ranking(profiles: &[Profile], me: &str, k: usize) -> Vec<(String, f64)> {
    let n = profiles.len() as f64;
    let mut all: Vec<(String, u64)> = oracle_numerators(profiles, me)
        .into_iter()
        .map(|(id, a, b)| (id, a + b))
        .filter(|(_, s)| *s > 0)
        .collect();
    all.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    all.into_iter().take(k).map(|(id, s)| (id, s as f64 / n)).collect()
}

/// Requests seen by a [`Stub`].
#[derive(Debug, Clone)]
pub struct Seen {
    pub authorization: Option<String>,
    pub body: String,
}

/// Local HTTP server answering every request with `status` and `body`.
pub struct Stub {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
}

pub fn stub(status: u16, body: String) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(mut conn) = conn else { break };
            let mut reader = BufReader::new(conn.try_clone().unwrap());
            let mut auth = None;
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if lower.starts_with("authorization:") {
                    auth = Some(line[14..].trim().to_string());
                }
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut buf = vec![0u8; len];
            let _ = reader.read_exact(&mut buf);
            log.lock().unwrap().push(Seen {
                authorization: auth,
                body: String::from_utf8_lossy(&buf).into_owned(),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = conn.write_all(reply.as_bytes());
        }
    });
    Stub { url, seen }
}

pub fn completion(levels: [&str; 5]) -> String {
    let content: serde_json::Map<String, serde_json::Value> =
        TRAITS.iter().zip(levels).map(|(t, l)| (t.to_string(), l.into())).collect();
    serde_json::json!({
        "choices": [{ "message": { "content": serde_json::Value::Object(content).to_string() } }],
        "usage": { "total_tokens": 42 }
    })
    .to_string()
}
