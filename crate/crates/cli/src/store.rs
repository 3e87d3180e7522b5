//! Student records, the match graph built from them, and the JSON snapshot file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use persona_core::llm::InferenceResult;
use persona_core::matchmaking::{personality_entities, EntityGraph, MatchConfig, MatchError, StudentProfile};
use serde::{Deserialize, Serialize};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub profile: StudentProfile,
    pub post: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<i64>>,
    pub inference: Option<InferenceResult>,
    pub needs_retry: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl StudentRecord {
    /// The profile's personality entities must be exactly the E/A/O part of
    /// `inference`, and absent when there is no inference.
    pub fn check(&self) -> Result<(), String> {
        self.profile.validate().map_err(|e| e.to_string())?;
        let held: Vec<_> = self.profile.entities.iter().filter(|e| e.is_personality()).cloned().collect();
        let want: Vec<_> = match &self.inference {
            Some(inf) => personality_entities(inf).into_iter().collect(),
            None => Vec::new(),
        };
        if held != want {
            return Err(format!("student `{}`: personality entities disagree with inference", self.profile.student_id));
        }
        if self.inference.is_none() != self.needs_retry {
            return Err(format!("student `{}`: retry flag disagrees with inference", self.profile.student_id));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("snapshot {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub config: MatchConfig,
    pub records: Vec<StudentRecord>,
}

/// Records keyed by id plus the graph derived from their profiles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Store {
    records: BTreeMap<String, StudentRecord>,
    graph: EntityGraph,
}

impl Store {
    pub fn new(config: MatchConfig) -> Self {
        Self {
            records: BTreeMap::new(),
            graph: EntityGraph::new(config),
        }
    }

    pub fn graph(&self) -> &EntityGraph {
        &self.graph
    }

    pub fn set_config(&mut self, config: MatchConfig) {
        self.graph.set_config(config);
    }

    pub fn get(&self, id: &str) -> Option<&StudentRecord> {
        self.records.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &StudentRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Display names of everyone stored, for redaction.
    pub fn roster(&self) -> Vec<String> {
        self.records.values().map(|r| r.profile.display_name.clone()).collect()
    }

    /// Insert a new record; a duplicate id leaves the store untouched.
    pub fn insert(&mut self, record: StudentRecord) -> Result<&StudentRecord, StoreError> {
        let id = record.profile.student_id.clone();
        if self.records.contains_key(&id) {
            return Err(MatchError::Conflict(id).into());
        }
        record.check().map_err(MatchError::InvalidEntity)?;
        self.graph.add_student(record.profile.clone())?;
        Ok(self.records.entry(id).or_insert(record))
    }

    /// Attach a fresh inference to an existing record, clearing its retry flag.
    pub fn set_inference(&mut self, id: &str, inference: InferenceResult) -> Result<&StudentRecord, StoreError> {
        let rec = self.records.get_mut(id).ok_or_else(|| MatchError::NotFound(id.to_string()))?;
        self.graph.set_personality(id, &inference)?;
        rec.profile.set_personality(&inference);
        rec.inference = Some(inference);
        rec.needs_retry = false;
        rec.last_error = None;
        Ok(rec)
    }

    pub fn set_error(&mut self, id: &str, error: String) -> Result<(), StoreError> {
        let rec = self.records.get_mut(id).ok_or_else(|| MatchError::NotFound(id.to_string()))?;
        rec.last_error = Some(error);
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            config: *self.graph.config(),
            records: self.records.values().cloned().collect(),
        }
    }

    pub fn from_snapshot(snap: Snapshot) -> Result<Self, StoreError> {
        let mut s = Self::new(snap.config);
        for r in snap.records {
            s.insert(r)?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.snapshot()).expect("serializable");
        text.push('\n');
        text
    }

    /// Write the snapshot to a sibling temp file, fsync, then rename over `path`.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(self.to_json().as_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            if let Ok(d) = std::fs::File::open(dir) {
                let _ = d.sync_all();
            }
        }
        Ok(())
    }

    /// Load a snapshot; a missing file yields an empty store.
    pub fn load(path: &Path, config: MatchConfig) -> Result<Self, StoreError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::new(config)),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |message: String| StoreError::Corrupt {
            path: path.display().to_string(),
            message,
        };
        let snap: Snapshot = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(corrupt(format!("unsupported version {}", snap.version)));
        }
        Self::from_snapshot(snap).map_err(|e| corrupt(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use persona_core::llm::{MockProvider, Provenance};
    use persona_core::matchmaking::Entity;

    fn record(id: &str, post: &str) -> StudentRecord {
        let mock = MockProvider::default();
        let inf = InferenceResult {
            levels: mock.levels(post),
            provenance: Provenance {
                provider: "mock".into(),
                model: mock.model.clone(),
                timestamp_ms: 0,
                temperature: 0.0,
                max_tokens: None,
            },
        };
        let mut profile = StudentProfile::new(id).with_entity(Entity::new("hobby", "chess").unwrap());
        profile.set_personality(&inf);
        StudentRecord {
            profile,
            post: post.into(),
            answers: None,
            inference: Some(inf),
            needs_retry: false,
            last_error: None,
        }
    }

    #[test]
    fn duplicate_insert_leaves_store_unchanged() {
        let mut s = Store::new(MatchConfig::default());
        s.insert(record("a", "hello")).unwrap();
        let before = s.clone();
        assert!(matches!(s.insert(record("a", "other")), Err(StoreError::Match(MatchError::Conflict(_)))));
        assert_eq!(s, before);
    }

    #[test]
    fn mismatched_personality_is_rejected() {
        let mut r = record("a", "hello");
        r.inference = None;
        assert!(r.check().is_err());
        r.needs_retry = true;
        assert!(r.check().is_err());
        r.profile.entities.retain(|e| !e.is_personality());
        assert!(r.check().is_ok());
    }

    #[test]
    fn save_load_save_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        let mut s = Store::new(MatchConfig::default());
        s.insert(record("a", "hello")).unwrap();
        s.insert(record("b", "I love hiking and chess.")).unwrap();
        s.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = Store::load(&path, MatchConfig::default()).unwrap();
        assert_eq!(loaded, s);
        loaded.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn corrupt_snapshot_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(Store::load(&path, MatchConfig::default()), Err(StoreError::Corrupt { .. })));
        assert!(Store::load(&dir.path().join("missing.json"), MatchConfig::default()).unwrap().is_empty());
    }
}
