//! Parsing of the five-trait low/high payload returned by a model.

use std::fmt;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;

use super::TraitLevels;
use crate::binning::TraitLevel;
use crate::traits::Trait;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    NotJsonObject(String),
    MissingTrait(Trait),
    DuplicateTrait(Trait),
    UnknownKey(String),
    InvalidValue { key: String, value: String },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::NotJsonObject(m) => write!(f, "payload is not a JSON object: {m}"),
            ParseErrorKind::MissingTrait(t) => write!(f, "missing trait {t}"),
            ParseErrorKind::DuplicateTrait(t) => write!(f, "duplicate trait {t}"),
            ParseErrorKind::UnknownKey(k) => write!(f, "unexpected key `{k}`"),
            ParseErrorKind::InvalidValue { key, value } => {
                write!(f, "value `{value}` for `{key}` is not low/high")
            }
        }
    }
}

/// Unparseable model output, with the raw payload kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub raw: String,
}

/// JSON object kept as ordered (key, value) pairs so duplicate keys survive.
struct Pairs(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for Pairs {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Pairs;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Pairs, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, serde_json::Value>()? {
                    out.push(entry);
                }
                Ok(Pairs(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    // drop an info string such as `json` on the opening fence line
    let body = match body.find(|c: char| c == '\n' || c == '{') {
        Some(i) if body[..i].chars().all(|c| c.is_ascii_alphanumeric()) => &body[i..],
        _ => body,
    };
    body.trim()
}

/// Parse a model payload into five binary levels.
///
/// Surrounding whitespace, code fences and letter case are tolerated; missing,
/// duplicate or unknown keys and any value other than low/high are not.
pub fn parse_response(raw: &str) -> Result<TraitLevels, ParseError> {
    let err = |kind| ParseError {
        kind,
        raw: raw.to_string(),
    };
    let body = strip_fences(raw);
    let Pairs(pairs) =
        serde_json::from_str(body).map_err(|e| err(ParseErrorKind::NotJsonObject(e.to_string())))?;
    let mut levels: [Option<TraitLevel>; 5] = [None; 5];
    for (key, value) in pairs {
        let t: Trait = match key.trim().parse() {
            Ok(t) if key.trim().len() > 1 => t,
            _ => return Err(err(ParseErrorKind::UnknownKey(key))),
        };
        let level = match value.as_str().map(|s| s.trim().to_ascii_lowercase()).as_deref() {
            Some("low") => TraitLevel::Low,
            Some("high") => TraitLevel::High,
            _ => {
                let value = match value {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                return Err(err(ParseErrorKind::InvalidValue { key, value }));
            }
        };
        if levels[t.index()].replace(level).is_some() {
            return Err(err(ParseErrorKind::DuplicateTrait(t)));
        }
    }
    let mut out = [TraitLevel::Low; 5];
    for t in Trait::ALL {
        out[t.index()] = levels[t.index()].ok_or_else(|| err(ParseErrorKind::MissingTrait(t)))?;
    }
    Ok(TraitLevels::new(out).expect("only low/high produced"))
}
