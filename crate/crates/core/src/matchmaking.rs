//! Homophily matchmaking over a student/entity index.
//!
//! A pair's score is the sum of the weights of the entities both students hold.
//! Weights are cohort-relative: an entity held by few students weighs more than one
//! everybody shares. Personality entities (`extroversion=high`, ...) are weighted
//! like any other entity, then scaled by a category multiplier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::TraitLevel;
use crate::llm::InferenceResult;
use crate::traits::{SelectedTrait, Trait};

pub const PERSONALITY: &str = "personality";
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("unknown student `{0}`")]
    NotFound(String),
    #[error("student `{0}` cannot be matched with themselves")]
    SelfMatch(String),
    #[error("student `{0}` already exists")]
    Conflict(String),
    #[error("invalid entity: {0}")]
    InvalidEntity(String),
}

/// A matchable attribute such as `hobby:chess` or `personality:openness=high`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub category: String,
    pub value: String,
}

impl Entity {
    /// A non-personality entity. Category and value are trimmed and lowercased.
    pub fn new(category: &str, value: &str) -> Result<Self, MatchError> {
        let category = category.trim().to_lowercase();
        let value = value.trim().to_lowercase();
        if category.is_empty() || value.is_empty() {
            return Err(MatchError::InvalidEntity("category and value must be non-empty".into()));
        }
        let e = Self { category, value };
        e.validate()?;
        Ok(e)
    }

    pub fn personality(t: SelectedTrait, level: TraitLevel) -> Self {
        debug_assert!(level != TraitLevel::Middle);
        Self {
            category: PERSONALITY.to_string(),
            value: format!("{}={}", t.key(), level.name()),
        }
    }

    pub fn is_personality(&self) -> bool {
        self.category == PERSONALITY
    }

    /// Trait and level of a personality entity.
    pub fn personality_parts(&self) -> Option<(SelectedTrait, TraitLevel)> {
        if !self.is_personality() {
            return None;
        }
        let (t, l) = self.value.split_once('=')?;
        let t = SelectedTrait::try_from(t.parse::<Trait>().ok()?).ok()?;
        let l = match l {
            "low" => TraitLevel::Low,
            "high" => TraitLevel::High,
            _ => return None,
        };
        (t.key() == self.value.split('=').next()?).then_some((t, l))
    }

    fn validate(&self) -> Result<(), MatchError> {
        if self.category.is_empty() || self.value.is_empty() {
            return Err(MatchError::InvalidEntity("category and value must be non-empty".into()));
        }
        if self.is_personality() && self.personality_parts().is_none() {
            return Err(MatchError::InvalidEntity(format!(
                "personality entity `{}` must be extroversion, agreeableness or openness with level low/high",
                self.value
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.category, self.value)
    }
}

impl FromStr for Entity {
    type Err = MatchError;

    /// Parses `category:value`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, v) = s
            .split_once(':')
            .ok_or_else(|| MatchError::InvalidEntity(format!("`{s}` is not category:value")))?;
        Entity::new(c, v)
    }
}

/// Extroversion, agreeableness and openness entities for an inference result.
/// Conscientiousness and neuroticism are dropped.
pub fn personality_entities(inference: &InferenceResult) -> BTreeSet<Entity> {
    SelectedTrait::ALL
        .iter()
        .map(|&t| Entity::personality(t, inference.level(t.as_trait())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub student_id: String,
    pub display_name: String,
    pub entities: BTreeSet<Entity>,
    #[serde(default)]
    pub intro_post_ref: Option<String>,
}

impl StudentProfile {
    pub fn new(student_id: impl Into<String>) -> Self {
        let student_id = student_id.into();
        Self {
            display_name: student_id.clone(),
            student_id,
            entities: BTreeSet::new(),
            intro_post_ref: None,
        }
    }

    pub fn with_entity(mut self, e: Entity) -> Self {
        self.entities.insert(e);
        self
    }

    pub fn personality(&self) -> impl Iterator<Item = (SelectedTrait, TraitLevel)> + '_ {
        self.entities.iter().filter_map(Entity::personality_parts)
    }

    /// Replace personality entities with those from `inference`.
    pub fn set_personality(&mut self, inference: &InferenceResult) {
        self.entities.retain(|e| !e.is_personality());
        self.entities.extend(personality_entities(inference));
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if self.student_id.trim().is_empty() {
            return Err(MatchError::InvalidEntity("student id is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entities {
            e.validate()?;
            if let Some((t, _)) = e.personality_parts() {
                if !seen.insert(t) {
                    return Err(MatchError::InvalidEntity(format!(
                        "student `{}` has more than one {t} entity",
                        self.student_id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightStrategy {
    /// `1 - count / n`
    #[default]
    InversePrevalence,
    /// `ln((n + 1) / (count + 1))`, the smoothed idf form.
    InverseDocumentFrequency,
}

impl WeightStrategy {
    pub fn base_weight(self, count: usize, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            WeightStrategy::InversePrevalence => 1.0 - count as f64 / n as f64,
            WeightStrategy::InverseDocumentFrequency => {
                ((n as f64 + 1.0) / (count as f64 + 1.0)).ln()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub strategy: WeightStrategy,
    /// Multiplier applied to personality entity weights.
    pub personality_multiplier: f64,
    /// Uniform multiplier applied to every weight.
    pub global_scale: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            strategy: WeightStrategy::InversePrevalence,
            personality_multiplier: 1.0,
            global_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub entity: Entity,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub student_id: String,
    pub score: f64,
    /// Shared entities in entity order; `score` is the sum of their weights.
    pub shared: Vec<Contribution>,
}

/// Students plus an entity → holders index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityGraph {
    students: BTreeMap<String, StudentProfile>,
    index: BTreeMap<Entity, BTreeSet<String>>,
    config: MatchConfig,
}

impl EntityGraph {
    pub fn new(config: MatchConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn from_profiles(
        profiles: impl IntoIterator<Item = StudentProfile>,
        config: MatchConfig,
    ) -> Result<Self, MatchError> {
        let mut g = Self::new(config);
        for p in profiles {
            g.add_student(p)?;
        }
        Ok(g)
    }

    pub fn config(&self) -> &MatchConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: MatchConfig) {
        self.config = config;
    }

    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }

    pub fn student(&self, id: &str) -> Option<&StudentProfile> {
        self.students.get(id)
    }

    pub fn students(&self) -> impl Iterator<Item = &StudentProfile> {
        self.students.values()
    }

    pub fn count(&self, e: &Entity) -> usize {
        self.index.get(e).map_or(0, BTreeSet::len)
    }

    pub fn holders(&self, e: &Entity) -> impl Iterator<Item = &str> {
        self.index.get(e).into_iter().flatten().map(String::as_str)
    }

    pub fn add_student(&mut self, profile: StudentProfile) -> Result<(), MatchError> {
        profile.validate()?;
        if self.students.contains_key(&profile.student_id) {
            return Err(MatchError::Conflict(profile.student_id));
        }
        for e in &profile.entities {
            self.index
                .entry(e.clone())
                .or_default()
                .insert(profile.student_id.clone());
        }
        self.students.insert(profile.student_id.clone(), profile);
        Ok(())
    }

    pub fn remove_student(&mut self, id: &str) -> Result<StudentProfile, MatchError> {
        let p = self
            .students
            .remove(id)
            .ok_or_else(|| MatchError::NotFound(id.to_string()))?;
        for e in &p.entities {
            if let Some(h) = self.index.get_mut(e) {
                h.remove(id);
                if h.is_empty() {
                    self.index.remove(e);
                }
            }
        }
        Ok(p)
    }

    /// Replace a student's personality entities, e.g. after a retried inference.
    pub fn set_personality(&mut self, id: &str, inference: &InferenceResult) -> Result<(), MatchError> {
        let mut p = self.remove_student(id)?;
        p.set_personality(inference);
        self.add_student(p)
    }

    /// Whether the incremental index equals one rebuilt from the profiles.
    pub fn audit_index(&self) -> bool {
        let mut rebuilt: BTreeMap<Entity, BTreeSet<String>> = BTreeMap::new();
        for p in self.students.values() {
            for e in &p.entities {
                rebuilt.entry(e.clone()).or_default().insert(p.student_id.clone());
            }
        }
        rebuilt == self.index
    }

    /// Cohort-relative weight before category multipliers.
    pub fn base_weight(&self, e: &Entity) -> f64 {
        self.config.strategy.base_weight(self.count(e), self.len())
    }

    pub fn entity_weight(&self, e: &Entity) -> f64 {
        let mult = if e.is_personality() {
            self.config.personality_multiplier
        } else {
            1.0
        };
        self.base_weight(e) * mult * self.config.global_scale
    }

    fn profile(&self, id: &str) -> Result<&StudentProfile, MatchError> {
        self.students
            .get(id)
            .ok_or_else(|| MatchError::NotFound(id.to_string()))
    }

    pub fn score_pair(&self, a: &str, b: &str) -> Result<MatchResult, MatchError> {
        self.score_pair_keyed(a, b).map(|(m, _)| m)
    }

    /// The match plus its unscaled ranking key. Under inverse prevalence the key
    /// is built from integer counts, so equal scores compare exactly equal.
    fn score_pair_keyed(&self, a: &str, b: &str) -> Result<(MatchResult, f64), MatchError> {
        let pa = self.profile(a)?;
        let pb = self.profile(b)?;
        if a == b {
            return Err(MatchError::SelfMatch(a.to_string()));
        }
        let shared_entities: Vec<&Entity> = pa.entities.intersection(&pb.entities).collect();
        let lambda = self.config.personality_multiplier;
        let key = match self.config.strategy {
            WeightStrategy::InversePrevalence => {
                let n = self.len() as u64;
                let (mut plain, mut personality) = (0u64, 0u64);
                for e in &shared_entities {
                    let rest = n - self.count(e) as u64;
                    if e.is_personality() {
                        personality += rest;
                    } else {
                        plain += rest;
                    }
                }
                (plain as f64 + lambda * personality as f64) / n as f64
            }
            WeightStrategy::InverseDocumentFrequency => {
                let (mut plain, mut personality) = (0.0, 0.0);
                for e in &shared_entities {
                    if e.is_personality() {
                        personality += self.base_weight(e);
                    } else {
                        plain += self.base_weight(e);
                    }
                }
                plain + lambda * personality
            }
        };
        let shared = shared_entities
            .into_iter()
            .map(|e| Contribution {
                entity: e.clone(),
                weight: self.entity_weight(e),
            })
            .collect();
        let result = MatchResult {
            student_id: b.to_string(),
            score: key * self.config.global_scale,
            shared,
        };
        Ok((result, key))
    }

    /// Best `k` matches for `id`: descending score, ties by ascending id, zero scores dropped.
    pub fn top_matches(&self, id: &str, k: usize) -> Result<Vec<MatchResult>, MatchError> {
        self.profile(id)?;
        let mut all: Vec<(MatchResult, f64)> = self
            .students
            .keys()
            .filter(|other| other.as_str() != id)
            .map(|other| self.score_pair_keyed(id, other))
            .collect::<Result<_, _>>()?;
        all.retain(|(_, key)| *key > 0.0);
        all.sort_by(|(x, kx), (y, ky)| ky.total_cmp(kx).then_with(|| x.student_id.cmp(&y.student_id)));
        Ok(all.into_iter().take(k).map(|(m, _)| m).collect())
    }

    /// Sum of weights of the distinct entities held in each category.
    pub fn category_weight_sums(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for e in self.index.keys() {
            *out.entry(e.category.clone()).or_default() += self.entity_weight(e);
        }
        out
    }

    /// Personality multiplier that places the personality category second by
    /// total weight: halfway between the two heaviest other categories.
    ///
    /// `None` when there is no personality weight or fewer than two other
    /// categories with distinct sums.
    pub fn calibrate_personality_multiplier(&self) -> Option<f64> {
        let mut raw = self.clone();
        raw.config.personality_multiplier = 1.0;
        raw.config.global_scale = 1.0;
        let sums = raw.category_weight_sums();
        let personality = *sums.get(PERSONALITY)?;
        if personality <= 0.0 {
            return None;
        }
        let mut others: Vec<f64> = sums
            .iter()
            .filter(|(c, _)| c.as_str() != PERSONALITY)
            .map(|(_, &s)| s)
            .collect();
        others.sort_by(|a, b| b.total_cmp(a));
        match others.as_slice() {
            [first, second, ..] if first > second => Some((first + second) / 2.0 / personality),
            [only] if *only > 0.0 => Some(only / 2.0 / personality),
            _ => None,
        }
    }

    /// JSON-ready snapshot: config and profiles in id order.
    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            config: self.config,
            students: self.students.values().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub config: MatchConfig,
    pub students: Vec<StudentProfile>,
}

impl GraphSnapshot {
    pub fn into_graph(self) -> Result<EntityGraph, MatchError> {
        EntityGraph::from_profiles(self.students, self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Provenance, TraitLevels};

    fn inference(levels: [TraitLevel; 5]) -> InferenceResult {
        InferenceResult {
            levels: TraitLevels::new(levels).unwrap(),
            provenance: Provenance {
                provider: "test".into(),
                model: "m".into(),
                timestamp_ms: 0,
                temperature: 0.0,
                max_tokens: None,
            },
        }
    }

    fn hobby(v: &str) -> Entity {
        Entity::new("hobby", v).unwrap()
    }

    #[test]
    fn all_high_gives_three_entities() {
        let got = personality_entities(&inference([TraitLevel::High; 5]));
        let values: BTreeSet<String> = got.iter().map(|e| e.value.clone()).collect();
        let want: BTreeSet<String> = ["extroversion=high", "agreeableness=high", "openness=high"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(values, want);
        assert!(got.iter().all(|e| !e.value.contains("neuroticism") && !e.value.contains("conscientiousness")));
    }

    #[test]
    fn mixed_levels_map_directly() {
        use TraitLevel::*;
        // O, C, E, A, N
        let got = personality_entities(&inference([Low, High, Low, High, High]));
        let values: Vec<String> = got.iter().map(|e| e.value.clone()).collect();
        assert_eq!(values, vec!["agreeableness=high", "extroversion=low", "openness=low"]);
    }

    #[test]
    fn forbidden_personality_entities_rejected() {
        let bad = Entity {
            category: PERSONALITY.into(),
            value: "neuroticism=high".into(),
        };
        let p = StudentProfile::new("x").with_entity(bad);
        assert!(matches!(EntityGraph::default().add_student(p), Err(MatchError::InvalidEntity(_))));
        assert!(Entity::new("personality", "conscientiousness=low").is_err());
        assert!(Entity::new("personality", "openness=middle").is_err());
        assert!(Entity::new("personality", "openness=high").is_ok());
        let two = StudentProfile::new("y")
            .with_entity(Entity::personality(SelectedTrait::Openness, TraitLevel::High))
            .with_entity(Entity::personality(SelectedTrait::Openness, TraitLevel::Low));
        assert!(two.validate().is_err());
    }

    #[test]
    fn prevalence_weights() {
        let mut g = EntityGraph::default();
        for i in 0..10 {
            let mut p = StudentProfile::new(format!("s{i}")).with_entity(hobby("reading"));
            if i < 2 {
                p = p.with_entity(hobby("chess"));
            }
            g.add_student(p).unwrap();
        }
        assert!((g.entity_weight(&hobby("chess")) - 0.8).abs() < 1e-12);
        assert_eq!(g.entity_weight(&hobby("reading")), 0.0);
        assert_eq!(g.entity_weight(&hobby("polo")), 1.0);
    }

    #[test]
    fn pair_scoring_errors_and_disjoint() {
        let mut g = EntityGraph::default();
        g.add_student(StudentProfile::new("a").with_entity(hobby("chess"))).unwrap();
        g.add_student(StudentProfile::new("b").with_entity(hobby("golf"))).unwrap();
        let m = g.score_pair("a", "b").unwrap();
        assert_eq!(m.score, 0.0);
        assert!(m.shared.is_empty());
        assert_eq!(g.score_pair("a", "a"), Err(MatchError::SelfMatch("a".into())));
        assert_eq!(g.score_pair("a", "zz"), Err(MatchError::NotFound("zz".into())));
        assert_eq!(g.top_matches("a", 5).unwrap(), vec![]);
        assert!(g.top_matches("zz", 5).is_err());
    }

    #[test]
    fn two_students_sharing_one_entity() {
        let mut g = EntityGraph::default();
        g.add_student(StudentProfile::new("a").with_entity(hobby("chess")).with_entity(hobby("golf"))).unwrap();
        g.add_student(StudentProfile::new("b").with_entity(hobby("chess"))).unwrap();
        g.add_student(StudentProfile::new("c").with_entity(hobby("golf")).with_entity(hobby("tennis"))).unwrap();
        let top = g.top_matches("b", DEFAULT_TOP_K).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].student_id, "a");
    }

    #[test]
    fn empty_graph_insert_and_conflict() {
        let mut g = EntityGraph::default();
        g.add_student(StudentProfile::new("a").with_entity(hobby("chess"))).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.top_matches("a", 5).unwrap().is_empty());
        let dup = g.add_student(StudentProfile::new("a"));
        assert_eq!(dup, Err(MatchError::Conflict("a".into())));
        assert_eq!(g.count(&hobby("chess")), 1);
        assert!(g.audit_index());
        g.remove_student("a").unwrap();
        assert!(g.audit_index());
        assert_eq!(g.count(&hobby("chess")), 0);
    }

    #[test]
    fn insertion_shifts_weight_by_prevalence_delta() {
        let mut g = EntityGraph::default();
        for i in 0..7 {
            let mut p = StudentProfile::new(format!("s{i}"));
            if i < 3 {
                p = p.with_entity(hobby("chess"));
            }
            g.add_student(p).unwrap();
        }
        let before = g.entity_weight(&hobby("chess"));
        g.add_student(StudentProfile::new("new").with_entity(hobby("chess"))).unwrap();
        let after = g.entity_weight(&hobby("chess"));
        // recompute from scratch: 1 - 3/7 -> 1 - 4/8
        assert!((before - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
        assert!((after - before - (3.0 / 7.0 - 4.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn calibration_places_personality_second() {
        let mut g = EntityGraph::default();
        let hobbies = ["chess", "golf", "piano", "yoga", "rugby", "surf"];
        for i in 0..12 {
            let p = StudentProfile::new(format!("s{i:02}"))
                .with_entity(hobby(hobbies[i % 6]))
                .with_entity(Entity::new("location", if i < 6 { "atlanta" } else { "boston" }).unwrap())
                .with_entity(Entity::personality(
                    SelectedTrait::Extroversion,
                    if i % 3 == 0 { TraitLevel::High } else { TraitLevel::Low },
                ));
            g.add_student(p).unwrap();
        }
        let lambda = g.calibrate_personality_multiplier().unwrap();
        let mut cfg = *g.config();
        cfg.personality_multiplier = lambda;
        g.set_config(cfg);
        let sums = g.category_weight_sums();
        let mut ranked: Vec<(&String, &f64)> = sums.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(a.1));
        assert_eq!(ranked[1].0, PERSONALITY);
    }

    #[test]
    fn idf_strategy_is_non_negative_and_monotone() {
        let s = WeightStrategy::InverseDocumentFrequency;
        assert!(s.base_weight(10, 10) >= 0.0);
        assert!(s.base_weight(1, 10) > s.base_weight(5, 10));
    }

    #[test]
    fn entity_parse() {
        let e: Entity = "Hobby: Chess ".parse().unwrap();
        assert_eq!(e, hobby("chess"));
        assert_eq!(e.to_string(), "hobby:chess");
        assert!("nocolon".parse::<Entity>().is_err());
        assert!(":x".parse::<Entity>().is_err());
    }
}
