//! Student-facing trait descriptions built only from favourable synonyms.
//!
//! Raw trait names and the words "low"/"high" never appear in rendered text;
//! every level is shown as a randomly chosen synonym from a fixed dictionary.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::binning::TraitLevel;
use crate::matchmaking::StudentProfile;
use crate::seeding::{label_seed, seeded, SeededRng};
use crate::traits::{SelectedTrait, Trait};

const EMBEDDED: &str = include_str!("../data/synonyms.json");

/// SHA-256 of the canonical form of the audited dictionary.
pub const AUDITED_CHECKSUM: &str =
    "454e538ae7e2cc1b6725d60d7d7283bc9da23017f16e1e85497547785bdeedde";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PresentationError {
    #[error("{0} is never shown to students")]
    UnsupportedTrait(Trait),
    #[error("only low and high levels have synonyms")]
    UnsupportedLevel,
    #[error("synonym file: {0}")]
    Format(String),
    #[error("synonym dictionary checksum {got} does not match the audited {expected}")]
    Drift { got: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymDictionary {
    lists: BTreeMap<(SelectedTrait, bool), Vec<String>>,
}

fn slot(level: TraitLevel) -> Result<bool, PresentationError> {
    match level {
        TraitLevel::High => Ok(true),
        TraitLevel::Low => Ok(false),
        TraitLevel::Middle => Err(PresentationError::UnsupportedLevel),
    }
}

fn level_key(high: bool) -> &'static str {
    if high {
        "high"
    } else {
        "low"
    }
}

impl SynonymDictionary {
    /// The audited built-in dictionary.
    pub fn builtin() -> Self {
        Self::from_json(EMBEDDED, false).expect("embedded synonyms are valid")
    }

    /// Parse `{trait: {level: [synonyms]}}`. With `allow_drift` false the
    /// content must hash to [`AUDITED_CHECKSUM`].
    pub fn from_json(text: &str, allow_drift: bool) -> Result<Self, PresentationError> {
        let raw: BTreeMap<String, BTreeMap<String, Vec<String>>> =
            serde_json::from_str(text).map_err(|e| PresentationError::Format(e.to_string()))?;
        let mut lists = BTreeMap::new();
        for (tname, levels) in &raw {
            let t: Trait = tname
                .parse()
                .map_err(|_| PresentationError::Format(format!("unknown trait `{tname}`")))?;
            let st = t.selected().ok_or(PresentationError::UnsupportedTrait(t))?;
            for (lname, words) in levels {
                let high = match lname.to_ascii_lowercase().as_str() {
                    "high" => true,
                    "low" => false,
                    _ => return Err(PresentationError::Format(format!("unknown level `{lname}`"))),
                };
                let words: Vec<String> = words.iter().map(|w| w.trim().to_string()).collect();
                if words.is_empty() {
                    return Err(PresentationError::Format(format!("{tname}/{lname} is empty")));
                }
                if let Some(bad) = words
                    .iter()
                    .find(|w| w.is_empty() || is_level_token(&w.to_ascii_lowercase()))
                {
                    return Err(PresentationError::Format(format!("`{bad}` is not an allowed synonym")));
                }
                lists.insert((st, high), words);
            }
        }
        for t in SelectedTrait::ALL {
            for high in [true, false] {
                if !lists.contains_key(&(t, high)) {
                    return Err(PresentationError::Format(format!(
                        "missing {}/{}",
                        t.key(),
                        level_key(high)
                    )));
                }
            }
        }
        let dict = Self { lists };
        let got = dict.checksum();
        if !allow_drift && got != AUDITED_CHECKSUM {
            return Err(PresentationError::Drift {
                got,
                expected: AUDITED_CHECKSUM.to_string(),
            });
        }
        Ok(dict)
    }

    /// SHA-256 hex over `trait/level:w1,w2,...\n` lines in E, A, O and high, low order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in SelectedTrait::ALL {
            for high in [true, false] {
                let words = &self.lists[&(t, high)];
                h.update(format!("{}/{}:{}\n", t.key(), level_key(high), words.join(",")));
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn synonyms(&self, t: SelectedTrait, level: TraitLevel) -> Result<&[String], PresentationError> {
        Ok(&self.lists[&(t, slot(level)?)])
    }

    /// Every synonym in the dictionary.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.lists.values().flatten().map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocabulary().any(|w| w == word)
    }

    /// Uniformly random synonym for a matchable trait level.
    pub fn describe<R: Rng + ?Sized>(
        &self,
        t: SelectedTrait,
        level: TraitLevel,
        rng: &mut R,
    ) -> Result<&str, PresentationError> {
        let list = self.synonyms(t, level)?;
        Ok(list.choose(rng).expect("non-empty list"))
    }

    /// Like [`SynonymDictionary::describe`] for any trait; Conscientiousness and
    /// Neuroticism are rejected.
    pub fn describe_trait<R: Rng + ?Sized>(
        &self,
        t: Trait,
        level: TraitLevel,
        rng: &mut R,
    ) -> Result<&str, PresentationError> {
        let st = t.selected().ok_or(PresentationError::UnsupportedTrait(t))?;
        self.describe(st, level, rng)
    }

    /// One sentence with a synonym per detected trait, or `None` when the
    /// profile carries no personality entities.
    pub fn trait_summary<R: Rng + ?Sized>(&self, profile: &StudentProfile, rng: &mut R) -> Option<String> {
        let words = self.words_for(profile.personality().collect(), rng);
        (!words.is_empty()).then(|| format!("You come across as {}.", join_words(&words)))
    }

    /// Synonyms for the trait levels both students hold.
    pub fn shared_trait_summary<R: Rng + ?Sized>(
        &self,
        a: &StudentProfile,
        b: &StudentProfile,
        rng: &mut R,
    ) -> SharedTraits {
        let theirs: Vec<_> = b.personality().collect();
        let shared: Vec<_> = a.personality().filter(|p| theirs.contains(p)).collect();
        let words = self.words_for(shared, rng);
        if words.is_empty() {
            SharedTraits::NoSharedTraits
        } else {
            SharedTraits::Shared(format!("You are both {}.", join_words(&words)))
        }
    }

    fn words_for<R: Rng + ?Sized>(&self, mut pairs: Vec<(SelectedTrait, TraitLevel)>, rng: &mut R) -> Vec<String> {
        pairs.sort();
        pairs
            .into_iter()
            .filter_map(|(t, l)| self.describe(t, l, rng).ok().map(str::to_string))
            .collect()
    }
}

impl Default for SynonymDictionary {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum SharedTraits {
    Shared(String),
    NoSharedTraits,
}

impl fmt::Display for SharedTraits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SharedTraits::Shared(s) => f.write_str(s),
            SharedTraits::NoSharedTraits => Ok(()),
        }
    }
}

fn join_words(words: &[String]) -> String {
    match words {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn is_level_token(word: &str) -> bool {
    matches!(word, "low" | "high" | "middle")
}

/// Lowercased word tokens; hyphenated words such as `low-key` stay whole.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(|w| w.trim_matches('-').to_lowercase())
}

/// Whether rendered text exposes a raw level label.
pub fn leaks_level_tokens(text: &str) -> bool {
    tokens(text).any(|w| is_level_token(&w))
}

/// RNG that yields the same synonyms for a student on every call.
pub fn student_rng(seed: u64, student_id: &str) -> SeededRng {
    seeded(label_seed(seed, student_id))
}
