//! BFI-44 questionnaire scoring.
//!
//! Each of the 44 Likert items (1..=5) belongs to one trait; reverse-keyed items
//! contribute `6 - answer`. Trait scores are kept as exact integer sums and the
//! 1..5 mean is derived on demand.

use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::scalar::Exact;
use crate::traits::Trait;

pub const ITEM_COUNT: usize = 44;
pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

const BUNDLED_KEY: &str = include_str!("../data/bfi44_key.csv");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BfiError {
    #[error("response has {0} answers, expected {ITEM_COUNT}")]
    Length(usize),
    #[error("answer {value} at item {index} is outside 1..=5")]
    OutOfRange { index: usize, value: i64 },
    #[error("invalid scoring key: {0}")]
    Key(String),
    #[error("questionnaire csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// One problem found by [`validate_response`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    Length { got: usize },
    OutOfRange { index: usize, value: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length { got } => write!(f, "length {got} \u{2260} {ITEM_COUNT}"),
            Violation::OutOfRange { index, value } => {
                write!(f, "answer {value} at index {index} outside 1..=5")
            }
        }
    }
}

impl From<Violation> for BfiError {
    fn from(v: Violation) -> Self {
        match v {
            Violation::Length { got } => BfiError::Length(got),
            Violation::OutOfRange { index, value } => BfiError::OutOfRange { index, value },
        }
    }
}

/// Raw questionnaire answers for one student. Item indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub student_id: String,
    pub answers: Vec<i64>,
}

impl QuestionnaireResponse {
    pub fn new(student_id: impl Into<String>, answers: Vec<i64>) -> Result<Self, BfiError> {
        let resp = Self {
            student_id: student_id.into(),
            answers,
        };
        match validate_response(&resp).into_iter().next() {
            Some(v) => Err(v.into()),
            None => Ok(resp),
        }
    }

    /// Answer for 1-based item `index`.
    pub fn answer(&self, index: usize) -> i64 {
        self.answers[index - 1]
    }
}

/// Every invariant violation in `resp`, in item order (empty when valid).
pub fn validate_response(resp: &QuestionnaireResponse) -> Vec<Violation> {
    let mut out = Vec::new();
    if resp.answers.len() != ITEM_COUNT {
        out.push(Violation::Length {
            got: resp.answers.len(),
        });
    }
    for (i, &a) in resp.answers.iter().enumerate() {
        if !(LIKERT_MIN as i64..=LIKERT_MAX as i64).contains(&a) {
            out.push(Violation::OutOfRange {
                index: i + 1,
                value: a,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyItem {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub reverse: bool,
}

/// Item-to-trait assignment with reverse flags, one entry per item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringKey {
    items: Vec<KeyItem>,
}

impl ScoringKey {
    pub fn new(items: Vec<KeyItem>) -> Result<Self, BfiError> {
        if items.len() != ITEM_COUNT {
            return Err(BfiError::Key(format!(
                "{} items, expected {ITEM_COUNT}",
                items.len()
            )));
        }
        let key = Self { items };
        if Trait::ALL.iter().any(|&t| key.item_count(t) == 0) {
            return Err(BfiError::Key("every trait needs at least one item".into()));
        }
        Ok(key)
    }

    /// The standard BFI-44 key shipped with the crate.
    pub fn bfi44() -> Self {
        Self::from_csv(BUNDLED_KEY.as_bytes()).expect("bundled key is valid")
    }

    /// Parse `index,trait,reverse(0|1)` lines; a header line is optional.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, BfiError> {
        let mut slots: Vec<Option<KeyItem>> = vec![None; ITEM_COUNT];
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| BfiError::Key(e.to_string()))?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if line == 0 && rec.get(0) == Some("index") {
                continue;
            }
            let bad = |m: &str| BfiError::Key(format!("line {}: {m}", line + 1));
            if rec.len() != 3 {
                return Err(bad("expected index,trait,reverse"));
            }
            let index: usize = rec[0].parse().map_err(|_| bad("bad index"))?;
            if !(1..=ITEM_COUNT).contains(&index) {
                return Err(bad("index outside 1..=44"));
            }
            let trait_: Trait = rec[1].parse().map_err(|_| bad("bad trait"))?;
            let reverse = match &rec[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("reverse must be 0 or 1")),
            };
            if slots[index - 1].replace(KeyItem { trait_, reverse }).is_some() {
                return Err(bad("duplicate item"));
            }
        }
        let items = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| BfiError::Key(format!("item {} missing", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,trait,reverse\n");
        for (i, item) in self.items.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                i + 1,
                item.trait_.letter(),
                u8::from(item.reverse)
            ));
        }
        out
    }

    /// Item for 1-based `index`.
    pub fn item(&self, index: usize) -> KeyItem {
        self.items[index - 1]
    }

    pub fn items(&self) -> &[KeyItem] {
        &self.items
    }

    pub fn item_count(&self, t: Trait) -> u32 {
        self.items.iter().filter(|i| i.trait_ == t).count() as u32
    }

    /// Midpoint of the trait's feasible sum range, `3 * item_count`.
    pub fn midpoint(&self, t: Trait) -> u32 {
        3 * self.item_count(t)
    }

    /// The same key with every reverse flag inverted.
    pub fn flipped(&self) -> Self {
        Self {
            items: self
                .items
                .iter()
                .map(|i| KeyItem {
                    trait_: i.trait_,
                    reverse: !i.reverse,
                })
                .collect(),
        }
    }
}

impl Default for ScoringKey {
    fn default() -> Self {
        Self::bfi44()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitScore {
    pub sum: u32,
    pub item_count: u32,
}

impl TraitScore {
    pub fn mean(&self) -> Exact {
        Exact::new(self.sum as i64, self.item_count as i64)
    }

    pub fn mean_f64(&self) -> f64 {
        self.sum as f64 / self.item_count as f64
    }
}

/// Per-trait sums in canonical O, C, E, A, N order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitScores {
    scores: [TraitScore; 5],
}

impl TraitScores {
    pub fn from_array(scores: [TraitScore; 5]) -> Self {
        Self { scores }
    }

    pub fn get(&self, t: Trait) -> TraitScore {
        self.scores[t.index()]
    }

    pub fn sum(&self, t: Trait) -> u32 {
        self.get(t).sum
    }

    pub fn iter(&self) -> impl Iterator<Item = (Trait, TraitScore)> + '_ {
        Trait::ALL.iter().map(|&t| (t, self.get(t)))
    }
}

/// Score a response against `key`.
pub fn score_bfi44(resp: &QuestionnaireResponse, key: &ScoringKey) -> Result<TraitScores, BfiError> {
    if let Some(v) = validate_response(resp).into_iter().next() {
        return Err(v.into());
    }
    let mut scores = [TraitScore {
        sum: 0,
        item_count: 0,
    }; 5];
    for (item, &answer) in key.items().iter().zip(&resp.answers) {
        let points = if item.reverse { 6 - answer } else { answer };
        let s = &mut scores[item.trait_.index()];
        s.sum += points as u32;
        s.item_count += 1;
    }
    Ok(TraitScores { scores })
}

/// Read a questionnaire CSV with header `student_id,q1,...,q44`.
///
/// Incomplete or out-of-range rows are rejected with the offending line.
pub fn read_questionnaire_csv<R: Read>(reader: R) -> Result<Vec<QuestionnaireResponse>, BfiError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| BfiError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected: Vec<String> = std::iter::once("student_id".to_string())
        .chain((1..=ITEM_COUNT).map(|i| format!("q{i}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(BfiError::Csv {
            line: 1,
            message: "header must be student_id,q1,...,q44".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| BfiError::Csv {
            line,
            message: e.to_string(),
        })?;
        let answers = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| BfiError::Csv {
                line,
                message: e.to_string(),
            })?;
        let resp = QuestionnaireResponse::new(&rec[0], answers).map_err(|e| BfiError::Csv {
            line,
            message: e.to_string(),
        })?;
        out.push(resp);
    }
    Ok(out)
}

pub fn write_questionnaire_csv(responses: &[QuestionnaireResponse]) -> String {
    let mut out = String::from("student_id");
    for i in 1..=ITEM_COUNT {
        out.push_str(&format!(",q{i}"));
    }
    out.push('\n');
    for r in responses {
        out.push_str(&r.student_id);
        for a in &r.answers {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    out
}
