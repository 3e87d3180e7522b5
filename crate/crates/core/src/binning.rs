//! Mapping trait sums onto Low/Middle/High levels.
//!
//! Cut-offs are absolute positions within each trait's feasible sum range
//! `[item_count, 5 * item_count]`: the binary scale splits at the midpoint and
//! breaks exact-midpoint ties with one draw from a caller-supplied RNG; the trinary
//! scale splits the range into thirds. All comparisons are exact.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bfi::ScoringKey;
use crate::scalar::{Exact, Scalar};
use crate::traits::Trait;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BinningError {
    #[error("{trait_} sum {sum} outside feasible range {min}..={max}")]
    OutOfRange {
        trait_: Trait,
        sum: Exact,
        min: i64,
        max: i64,
    },
    #[error("unknown scale `{0}` (expected binary, trinary or five-point)")]
    UnknownScale(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    FivePoint,
    Trinary,
    Binary,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::FivePoint, Scale::Trinary, Scale::Binary];

    pub fn name(self) -> &'static str {
        match self {
            Scale::FivePoint => "five-point",
            Scale::Trinary => "trinary",
            Scale::Binary => "binary",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scale {
    type Err = BinningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" | "low-high" => Ok(Scale::Binary),
            "trinary" | "low-middle-high" => Ok(Scale::Trinary),
            "five-point" | "fivepoint" | "1-5" => Ok(Scale::FivePoint),
            other => Err(BinningError::UnknownScale(other.to_string())),
        }
    }
}

/// Categorical trait level. `Middle` only arises on the trinary scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraitLevel {
    Low,
    Middle,
    High,
}

impl TraitLevel {
    pub fn name(self) -> &'static str {
        match self {
            TraitLevel::Low => "low",
            TraitLevel::Middle => "middle",
            TraitLevel::High => "high",
        }
    }

    /// Low = 0, Middle = 0.5, High = 1.
    pub fn to_numeric<T: Scalar>(self) -> T {
        level_to_numeric(self)
    }
}

impl fmt::Display for TraitLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn level_to_numeric<T: Scalar>(level: TraitLevel) -> T {
    match level {
        TraitLevel::Low => T::zero(),
        TraitLevel::Middle => T::of(0.5),
        TraitLevel::High => T::one(),
    }
}

/// Result of binning one sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binned {
    Level(TraitLevel),
    /// Five-point scale: the mean rounded half-up to 1..=5.
    Point(u8),
}

impl Binned {
    pub fn level(self) -> Option<TraitLevel> {
        match self {
            Binned::Level(l) => Some(l),
            Binned::Point(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitCutoffs {
    pub item_count: u32,
    /// Binary scale: Low below, High above, random at equality.
    pub midpoint: u32,
    /// Trinary scale: Low at or below.
    pub trinary_lower: Exact,
    /// Trinary scale: High strictly above.
    pub trinary_upper: Exact,
}

impl TraitCutoffs {
    /// Cut-offs for a trait measured by `item_count` Likert items.
    pub fn for_item_count(item_count: u32) -> Self {
        let min = item_count as i64;
        let width = 4 * min;
        Self {
            item_count,
            midpoint: 3 * item_count,
            trinary_lower: Exact::from_integer(min) + Exact::new(width, 3),
            trinary_upper: Exact::from_integer(min) + Exact::new(2 * width, 3),
        }
    }

    pub fn min_sum(&self) -> i64 {
        self.item_count as i64
    }

    pub fn max_sum(&self) -> i64 {
        5 * self.item_count as i64
    }
}

/// Per-trait cut-offs in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffTable {
    rows: [TraitCutoffs; 5],
}

impl CutoffTable {
    /// The BFI-44 table: midpoints O=30, C=27, E=24, A=27, N=24 and trinary bounds at thirds.
    pub fn bfi44() -> Self {
        Self::from_key(&ScoringKey::bfi44())
    }

    pub fn from_key(key: &ScoringKey) -> Self {
        Self {
            rows: Trait::ALL.map(|t| TraitCutoffs::for_item_count(key.item_count(t))),
        }
    }

    pub fn get(&self, t: Trait) -> TraitCutoffs {
        self.rows[t.index()]
    }

    /// Classify `sum` for `trait_` on `scale`.
    ///
    /// Exactly one value is drawn from `rng`, and only for a binary midpoint tie.
    pub fn bin<R: Rng + ?Sized>(
        &self,
        trait_: Trait,
        sum: Exact,
        scale: Scale,
        rng: &mut R,
    ) -> Result<Binned, BinningError> {
        let c = self.get(trait_);
        if sum < Exact::from_integer(c.min_sum()) || sum > Exact::from_integer(c.max_sum()) {
            return Err(BinningError::OutOfRange {
                trait_,
                sum,
                min: c.min_sum(),
                max: c.max_sum(),
            });
        }
        let out = match scale {
            Scale::Binary => {
                let mid = Exact::from_integer(c.midpoint as i64);
                let level = if sum < mid {
                    TraitLevel::Low
                } else if sum > mid {
                    TraitLevel::High
                } else if rng.random_bool(0.5) {
                    TraitLevel::High
                } else {
                    TraitLevel::Low
                };
                Binned::Level(level)
            }
            Scale::Trinary => {
                let level = if sum <= c.trinary_lower {
                    TraitLevel::Low
                } else if sum <= c.trinary_upper {
                    TraitLevel::Middle
                } else {
                    TraitLevel::High
                };
                Binned::Level(level)
            }
            Scale::FivePoint => {
                let mean = sum / Exact::from_integer(c.item_count as i64);
                let rounded = (mean + Exact::new(1, 2)).floor().to_integer();
                Binned::Point(rounded.clamp(1, 5) as u8)
            }
        };
        Ok(out)
    }

    /// Binned level for categorical scales; panics on `FivePoint`.
    pub fn bin_level<R: Rng + ?Sized>(
        &self,
        trait_: Trait,
        sum: u32,
        scale: Scale,
        rng: &mut R,
    ) -> Result<TraitLevel, BinningError> {
        assert!(scale != Scale::FivePoint, "five-point scale has no categorical level");
        self.bin(trait_, Exact::from_integer(sum as i64), scale, rng)
            .map(|b| b.level().expect("categorical scale"))
    }

    /// JSON-friendly view for audit export.
    pub fn to_document(&self) -> serde_json::Value {
        let rows: Vec<_> = Trait::ALL
            .iter()
            .map(|&t| {
                let c = self.get(t);
                serde_json::json!({
                    "trait": t.name(),
                    "item_count": c.item_count,
                    "feasible_range": [c.min_sum(), c.max_sum()],
                    "binary": {
                        "midpoint": c.midpoint,
                        "rule": format!("0 if x < {m}; rand 0/1 if x = {m}; 1 if x > {m}", m = c.midpoint),
                    },
                    "trinary": {
                        "lower": c.trinary_lower.to_string(),
                        "upper": c.trinary_upper.to_string(),
                        "lower_decimal": ratio_f64(c.trinary_lower),
                        "upper_decimal": ratio_f64(c.trinary_upper),
                    },
                })
            })
            .collect();
        serde_json::json!({ "traits": rows, "tie_break": "uniform 50/50 from seeded rng" })
    }
}

impl Default for CutoffTable {
    fn default() -> Self {
        Self::bfi44()
    }
}

fn ratio_f64(r: Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Classify with the standard BFI-44 cut-offs.
pub fn bin_trait<R: Rng + ?Sized>(
    trait_: Trait,
    sum: Exact,
    scale: Scale,
    rng: &mut R,
) -> Result<Binned, BinningError> {
    CutoffTable::bfi44().bin(trait_, sum, scale, rng)
}

pub mod oracle {
    //! Literal transcription of the published cut-off table, kept separate from
    //! [`CutoffTable`](super::CutoffTable) so the two can be compared.

    use super::{Scale, TraitLevel};
    use crate::traits::Trait;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum OracleClass {
        Level(TraitLevel),
        Tie,
    }

    fn feasible(t: Trait) -> std::ops::RangeInclusive<u32> {
        match t {
            Trait::Openness => 10..=50,
            Trait::Conscientiousness | Trait::Agreeableness => 9..=45,
            Trait::Extroversion | Trait::Neuroticism => 8..=40,
        }
    }

    fn classify(t: Trait, scale: Scale, x: f64) -> OracleClass {
        use OracleClass::*;
        use TraitLevel::*;
        match scale {
            Scale::Binary => {
                let m = match t {
                    Trait::Openness => 30.0,
                    Trait::Conscientiousness => 27.0,
                    Trait::Extroversion => 24.0,
                    Trait::Agreeableness => 27.0,
                    Trait::Neuroticism => 24.0,
                };
                if x < m {
                    Level(Low)
                } else if x == m {
                    Tie
                } else {
                    Level(High)
                }
            }
            Scale::Trinary => {
                let (lo, hi) = match t {
                    Trait::Openness => (23.33, 36.67),
                    Trait::Conscientiousness => (21.0, 33.0),
                    Trait::Extroversion => (18.67, 29.33),
                    Trait::Agreeableness => (21.0, 33.0),
                    Trait::Neuroticism => (18.67, 29.33),
                };
                if x <= lo {
                    Level(Low)
                } else if x <= hi {
                    Level(Middle)
                } else {
                    Level(High)
                }
            }
            Scale::FivePoint => panic!("the published table covers only the two categorical scales"),
        }
    }

    /// Every feasible integer sum for `t` with its class under `scale`.
    pub fn brute_force_bin_oracle(t: Trait, scale: Scale) -> Vec<(u32, OracleClass)> {
        feasible(t).map(|s| (s, classify(t, scale, s as f64))).collect()
    }
}
