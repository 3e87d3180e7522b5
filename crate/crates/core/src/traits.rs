//! The five personality dimensions and the three used for matching.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};


#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown trait `{0}`")]
pub struct ParseTraitError(pub String);

/// Big Five dimension. Canonical order is O, C, E, A, N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extroversion,
    Agreeableness,
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Openness,
        Trait::Conscientiousness,
        Trait::Extroversion,
        Trait::Agreeableness,
        Trait::Neuroticism,
    ];

    /// Position in canonical O, C, E, A, N order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Trait::Openness => "Openness",
            Trait::Conscientiousness => "Conscientiousness",
            Trait::Extroversion => "Extroversion",
            Trait::Agreeableness => "Agreeableness",
            Trait::Neuroticism => "Neuroticism",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Trait::Openness => 'O',
            Trait::Conscientiousness => 'C',
            Trait::Extroversion => 'E',
            Trait::Agreeableness => 'A',
            Trait::Neuroticism => 'N',
        }
    }

    /// The matchable subset, `None` for Conscientiousness and Neuroticism.
    pub fn selected(self) -> Option<SelectedTrait> {
        match self {
            Trait::Openness => Some(SelectedTrait::Openness),
            Trait::Extroversion => Some(SelectedTrait::Extroversion),
            Trait::Agreeableness => Some(SelectedTrait::Agreeableness),
            Trait::Conscientiousness | Trait::Neuroticism => None,
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trait {
    type Err = ParseTraitError;

    /// Accepts full names (any case), single letters, and the "Extraversion" spelling.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let found = match lower.as_str() {
            "o" | "openness" => Trait::Openness,
            "c" | "conscientiousness" => Trait::Conscientiousness,
            "e" | "extroversion" | "extraversion" => Trait::Extroversion,
            "a" | "agreeableness" => Trait::Agreeableness,
            "n" | "neuroticism" => Trait::Neuroticism,
            _ => return Err(ParseTraitError(t.to_string())),
        };
        Ok(found)
    }
}

/// Traits that may enter the match graph and be shown to students.
///
/// Conscientiousness and Neuroticism have no variant here, so they cannot reach
/// matchmaking or presentation through any typed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SelectedTrait {
    Extroversion,
    Agreeableness,
    Openness,
}

impl SelectedTrait {
    pub const ALL: [SelectedTrait; 3] = [
        SelectedTrait::Extroversion,
        SelectedTrait::Agreeableness,
        SelectedTrait::Openness,
    ];

    pub fn as_trait(self) -> Trait {
        match self {
            SelectedTrait::Extroversion => Trait::Extroversion,
            SelectedTrait::Agreeableness => Trait::Agreeableness,
            SelectedTrait::Openness => Trait::Openness,
        }
    }

    /// Lowercase key used in entity values, e.g. `openness`.
    pub fn key(self) -> &'static str {
        match self {
            SelectedTrait::Extroversion => "extroversion",
            SelectedTrait::Agreeableness => "agreeableness",
            SelectedTrait::Openness => "openness",
        }
    }
}

impl TryFrom<Trait> for SelectedTrait {
    type Error = Trait;

    fn try_from(t: Trait) -> Result<Self, Self::Error> {
        t.selected().ok_or(t)
    }
}

impl fmt::Display for SelectedTrait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_trait().name())
    }
}
