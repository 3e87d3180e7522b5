//! Independent reference implementations used as test oracles. None of these
//! call into the library's scoring, metric, matching or statistics code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use persona_core::TraitLevel;

/// Published BFI-44 key: (trait letter, items, reverse-keyed items), 1-based.
pub const KEY: [(char, &[usize], &[usize]); 5] = [
    ('O', &[5, 10, 15, 20, 25, 30, 35, 40, 41, 44], &[35, 41]),
    ('C', &[3, 8, 13, 18, 23, 28, 33, 38, 43], &[8, 18, 23, 43]),
    ('E', &[1, 6, 11, 16, 21, 26, 31, 36], &[6, 21, 31]),
    ('A', &[2, 7, 12, 17, 22, 27, 32, 37, 42], &[2, 12, 27, 37]),
    ('N', &[4, 9, 14, 19, 24, 29, 34, 39], &[9, 24, 34]),
];

/// Walk every item and add its keyed value to its trait, O, C, E, A, N order.
pub fn item_walk_sums(answers: &[i64]) -> [u32; 5] {
    let mut sums = [0u32; 5];
    for (t, (_, items, rev)) in KEY.iter().enumerate() {
        for &i in items.iter() {
            let a = answers[i - 1];
            let v = if rev.contains(&i) { 6 - a } else { a };
            sums[t] += v as u32;
        }
    }
    sums
}

/// `(accuracy, f1)` by tallying every (prediction, gold) category pair.
pub fn confusion_oracle(preds: &[TraitLevel], gold: &[TraitLevel]) -> (f64, f64) {
    let cats = [TraitLevel::Low, TraitLevel::Middle, TraitLevel::High];
    let mut table = [[0usize; 3]; 3];
    for (pi, &pc) in cats.iter().enumerate() {
        for (gi, &gc) in cats.iter().enumerate() {
            table[pi][gi] = preds
                .iter()
                .zip(gold)
                .filter(|&(&p, &g)| p == pc && g == gc)
                .count();
        }
    }
    let n = preds.len() as f64;
    let diag: usize = (0..3).map(|i| table[i][i]).sum();
    let tp = table[2][2] as f64;
    let fp = (table[2][0] + table[2][1]) as f64;
    let fn_ = (table[0][2] + table[1][2]) as f64;
    let f1 = if 2.0 * tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    (diag as f64 / n, f1)
}

pub type Profile = (String, Vec<(String, String)>);

/// Per-candidate `(id, plain, personality)` numerators: the score is
/// `(plain + multiplier * personality) / n`, each shared entity contributing
/// `n - holders`. Found by scanning every profile for every shared entity.
pub fn brute_force_numerators(profiles: &[Profile], me: &str) -> Vec<(String, u64, u64)> {
    let n = profiles.len() as u64;
    let mine = &profiles.iter().find(|p| p.0 == me).expect("known student").1;
    let mut out = Vec::new();
    for (id, ents) in profiles {
        if id == me {
            continue;
        }
        let mut shared: Vec<&(String, String)> = mine.iter().filter(|e| ents.contains(e)).collect();
        shared.sort();
        shared.dedup();
        let (mut plain, mut personality) = (0u64, 0u64);
        for e in shared {
            let holders = profiles.iter().filter(|p| p.1.contains(e)).count() as u64;
            if e.0 == "personality" {
                personality += n - holders;
            } else {
                plain += n - holders;
            }
        }
        out.push((id.clone(), plain, personality));
    }
    out
}

pub fn brute_force_scores(profiles: &[Profile], me: &str, multiplier: f64) -> Vec<(String, f64)> {
    let n = profiles.len() as f64;
    brute_force_numerators(profiles, me)
        .into_iter()
        .map(|(id, a, b)| (id, (a as f64 + multiplier * b as f64) / n))
        .collect()
}

const TIE: f64 = 1e-9;

/// Check a ranked list against exhaustive pairwise scores: scores agree, order is
/// descending with near-equal scores in ascending id order, zero scores are
/// absent, and nothing left out outranks the last entry.
pub fn check_ranking(got: &[(String, f64)], all: &[(String, f64)], k: usize) -> Result<(), String> {
    let positive: Vec<&(String, f64)> = all.iter().filter(|(_, s)| *s > TIE).collect();
    if got.len() != positive.len().min(k) {
        return Err(format!("expected {} matches, got {}", positive.len().min(k), got.len()));
    }
    for (id, s) in got {
        let want = all.iter().find(|(o, _)| o == id).ok_or(format!("unknown {id}"))?.1;
        if (want - s).abs() > TIE {
            return Err(format!("{id}: score {s} vs oracle {want}"));
        }
    }
    let before = |a: &(String, f64), b: &(String, f64)| a.1 > b.1 + TIE || ((a.1 - b.1).abs() <= TIE && a.0 < b.0);
    for w in got.windows(2) {
        if !before(&w[0], &w[1]) {
            return Err(format!("{} ranked before {}", w[0].0, w[1].0));
        }
    }
    if let Some(last) = got.last() {
        for c in positive {
            if !got.iter().any(|g| g.0 == c.0) && before(c, last) {
                return Err(format!("{} should outrank {}", c.0, last.0));
            }
        }
    }
    Ok(())
}

/// Sample statistics computed directly from a sorted copy.
pub struct StatsOracle {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub skewness: f64,
}

fn linear_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn stats_oracle(values: &[f64]) -> StatsOracle {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    StatsOracle {
        mean,
        std,
        min: v[0],
        q25: linear_quantile(&v, 0.25),
        median: linear_quantile(&v, 0.5),
        q75: linear_quantile(&v, 0.75),
        max: v[v.len() - 1],
        skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
    }
}

/// Word tokens with hyphenated words kept whole, lowercased.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Published favourable synonym lists keyed by (trait key, level).
pub fn synonym_table() -> BTreeMap<(&'static str, &'static str), Vec<&'static str>> {
    let mut m = BTreeMap::new();
    m.insert(("extroversion", "high"), vec!["sociable", "outgoing", "gregarious", "charismatic", "lively", "expressive", "energetic", "enthusiastic", "talkative", "friendly"]);
    m.insert(("extroversion", "low"), vec!["reserved", "quiet", "observant", "introspective", "thoughtful", "calm", "reflective", "private", "contemplative", "introverted", "low-key"]);
    m.insert(("agreeableness", "high"), vec!["kind", "cooperative", "empathetic", "warm", "compassionate", "friendly", "generous", "understanding", "supportive", "helpful"]);
    m.insert(("agreeableness", "low"), vec!["independent", "confident", "self-reliant", "forthright", "direct", "strong-willed", "principled", "uncompromising", "determined", "self-assured"]);
    m.insert(("openness", "high"), vec!["imaginative", "inventive", "curious", "innovative", "inquisitive", "adventurous", "visionary", "creative", "unconventional", "explorative"]);
    m.insert(("openness", "low"), vec!["pragmatic", "consistent", "stable", "familiar", "traditional", "secure", "steady", "reliable", "grounded", "predictable"]);
    m
}
