//! Ingestion, rendering and evaluation on top of the core library.

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use persona_core::binning::CutoffTable;
use persona_core::bfi::{ScoringKey, TraitScores};
use persona_core::cohort::{generate_cohort, score_cohort, summary_stats, DistributionSpec};
use persona_core::dataset::DatasetRow;
use persona_core::ensemble::{EnsembleConfig, FeatureVector};
use persona_core::evaluation::{
    compare_scales, evaluate_ensemble, evaluate_predictions, gold_levels, ModelKind, ReportMeta,
};
use persona_core::llm::{infer_batch, infer_traits, ChatProvider, InferenceResult, MockProvider, RetryPolicy};
use persona_core::matchmaking::{Entity, MatchError, StudentProfile, PERSONALITY};
use persona_core::presentation::{student_rng, SharedTraits, SynonymDictionary};
use persona_core::seeding::{label_seed, seeded, stream_rng};
use persona_core::{MetricsReport, Scale, ScaleComparison, SummaryStats, TraitLevel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::AppConfig;
use crate::store::{Store, StoreError, StudentRecord};

/// RNG stream numbers under the master seed.
pub mod streams {
    pub const COHORT: u64 = 1;
    pub const GOLD: u64 = 2;
    pub const SCALES: u64 = 3;
    pub const ENSEMBLE: u64 = 4;
    pub const BIN: u64 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Upstream(String),
    #[error("{0}")]
    Internal(String),
}

impl From<MatchError> for AppError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::NotFound(_) => AppError::NotFound(e.to_string()),
            MatchError::Conflict(_) => AppError::Conflict(e.to_string()),
            MatchError::SelfMatch(_) | MatchError::InvalidEntity(_) => AppError::BadRequest(e.to_string()),
        }
    }
}

impl From<StoreError> for AppError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Match(m) => m.into(),
            other => AppError::Internal(other.to_string()),
        }
    }
}

/// An ingestion request: one introduction post plus pre-extracted entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewStudent {
    pub student_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    pub post: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<i64>>,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

impl NewStudent {
    pub fn validate(&self) -> Result<(), AppError> {
        if self.post.trim().is_empty() {
            return Err(AppError::BadRequest(format!("student `{}`: post is empty", self.student_id)));
        }
        if self.entities.iter().any(|e| e.category == PERSONALITY) {
            return Err(AppError::BadRequest("personality entities are inferred, not supplied".into()));
        }
        self.as_row().validate().map_err(|e| AppError::BadRequest(e.to_string()))
    }

    pub fn as_row(&self) -> DatasetRow {
        DatasetRow {
            student_id: self.student_id.clone(),
            post: self.post.clone(),
            answers: self.answers.clone(),
            entities: self.entities.clone(),
        }
    }

    pub fn profile(&self) -> StudentProfile {
        let mut p = StudentProfile::new(self.student_id.trim());
        if let Some(name) = &self.display_name {
            p.display_name = name.clone();
        }
        p.entities.extend(self.entities.iter().cloned());
        p.intro_post_ref = Some(format!("post:{}", self.student_id.trim()));
        p
    }

    /// Names to redact from posts: the display name and each of its parts.
    pub fn roster_names(&self) -> Vec<String> {
        self.display_name.as_deref().map(name_variants).unwrap_or_default()
    }
}

/// A full name plus its whitespace-separated parts of two or more characters.
pub fn name_variants(name: &str) -> Vec<String> {
    let name = name.trim();
    if name.is_empty() {
        return Vec::new();
    }
    let mut out = vec![name.to_string()];
    out.extend(
        name.split_whitespace()
            .filter(|p| p.chars().count() >= 2 && *p != name)
            .map(str::to_string),
    );
    out
}

impl From<DatasetRow> for NewStudent {
    fn from(r: DatasetRow) -> Self {
        Self {
            student_id: r.student_id,
            display_name: None,
            post: r.post,
            answers: r.answers,
            entities: r.entities,
        }
    }
}

/// Parse and validate a students JSONL file; blank lines are skipped.
pub fn read_students<R: BufRead>(reader: R) -> anyhow::Result<Vec<NewStudent>> {
    let mut out: Vec<NewStudent> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: NewStudent = serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?;
        s.validate().with_context(|| format!("line {}", i + 1))?;
        if out.iter().any(|o| o.student_id == s.student_id) {
            anyhow::bail!("line {}: duplicate student id `{}`", i + 1, s.student_id);
        }
        out.push(s);
    }
    Ok(out)
}

pub fn read_students_file(path: &Path) -> anyhow::Result<Vec<NewStudent>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_students(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Build the stored record from a profile and an inference outcome.
pub fn make_record(new: &NewStudent, outcome: Result<InferenceResult, String>) -> StudentRecord {
    let mut profile = new.profile();
    match outcome {
        Ok(inf) => {
            profile.set_personality(&inf);
            StudentRecord {
                profile,
                post: new.post.clone(),
                answers: new.answers.clone(),
                inference: Some(inf),
                needs_retry: false,
                last_error: None,
            }
        }
        Err(e) => StudentRecord {
            profile,
            post: new.post.clone(),
            answers: new.answers.clone(),
            inference: None,
            needs_retry: true,
            last_error: Some(e),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitsView {
    pub student_id: String,
    pub summary: Option<String>,
    pub needs_retry: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchView {
    pub student_id: String,
    pub display_name: String,
    pub score: f64,
    /// Shared non-personality entities as `category:value`.
    pub shared_interests: Vec<String>,
    pub shared_traits: SharedTraits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchesView {
    pub student_id: String,
    pub k: usize,
    pub matches: Vec<MatchView>,
}

/// Seed for the wording of a pair's shared traits; the same in both directions.
pub fn pair_seed(seed: u64, a: &str, b: &str) -> u64 {
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    label_seed(seed, &format!("{x}\u{1f}{y}"))
}

/// Configured store, provider and dictionary.
pub struct Engine {
    pub config: AppConfig,
    pub provider: Arc<dyn ChatProvider>,
    pub synonyms: SynonymDictionary,
    pub store: Store,
}

impl Engine {
    /// Provider, synonyms and (when configured) the persisted snapshot.
    pub fn open(config: AppConfig) -> anyhow::Result<Self> {
        let provider = config.provider()?;
        let store = match &config.paths.snapshot {
            Some(p) => Store::load(p, config.matching.weights)?,
            None => Store::new(config.matching.weights),
        };
        Self::with_parts(config, provider, store)
    }

    pub fn with_parts(config: AppConfig, provider: Arc<dyn ChatProvider>, store: Store) -> anyhow::Result<Self> {
        let synonyms = config.synonyms()?;
        Ok(Self {
            config,
            provider,
            synonyms,
            store,
        })
    }

    pub fn policy(&self) -> RetryPolicy {
        self.config.provider.live.retry_policy()
    }

    pub fn persist(&self) -> Result<(), AppError> {
        if let Some(p) = &self.config.paths.snapshot {
            self.store.save(p)?;
        }
        Ok(())
    }

    /// Checks before inference: request valid, id fresh. Returns the roster to redact.
    pub fn plan_ingest(&self, new: &NewStudent) -> Result<Vec<String>, AppError> {
        new.validate()?;
        if self.store.contains(new.student_id.trim()) {
            return Err(MatchError::Conflict(new.student_id.clone()).into());
        }
        let mut roster = self.named_roster();
        roster.extend(new.roster_names());
        Ok(roster)
    }

    fn named_roster(&self) -> Vec<String> {
        self.store
            .records()
            .filter(|r| r.profile.display_name != r.profile.student_id)
            .flat_map(|r| name_variants(&r.profile.display_name))
            .collect()
    }

    pub fn commit_ingest(
        &mut self,
        new: &NewStudent,
        outcome: Result<InferenceResult, String>,
    ) -> Result<StudentRecord, AppError> {
        let rec = self.store.insert(make_record(new, outcome))?.clone();
        self.persist()?;
        Ok(rec)
    }

    /// Redact, infer, add to the graph, persist. A provider failure still stores
    /// the student, without personality entities and flagged for retry.
    pub fn ingest(&mut self, new: &NewStudent) -> Result<StudentRecord, AppError> {
        let roster = self.plan_ingest(new)?;
        let outcome = infer_traits(self.provider.as_ref(), &new.post, &roster, &self.policy()).map_err(|e| e.to_string());
        self.commit_ingest(new, outcome)
    }

    /// Ingest many students with bounded concurrent inference. Input order is
    /// kept; the roster covers every named student in the batch and store.
    pub fn ingest_all(&mut self, batch: &[NewStudent]) -> Result<Vec<StudentRecord>, AppError> {
        for (i, s) in batch.iter().enumerate() {
            s.validate()?;
            if self.store.contains(&s.student_id) || batch[..i].iter().any(|o| o.student_id == s.student_id) {
                return Err(MatchError::Conflict(s.student_id.clone()).into());
            }
        }
        let mut roster = self.named_roster();
        roster.extend(batch.iter().flat_map(NewStudent::roster_names));
        let posts: Vec<String> = batch.iter().map(|s| s.post.clone()).collect();
        let outcomes = infer_batch(
            self.provider.as_ref(),
            &posts,
            &roster,
            &self.policy(),
            self.config.provider.live.max_in_flight,
        );
        let mut out = Vec::with_capacity(batch.len());
        for (s, o) in batch.iter().zip(outcomes) {
            out.push(self.store.insert(make_record(s, o.map_err(|e| e.to_string())))?.clone());
        }
        if self.config.matching.auto_calibrate {
            self.calibrate();
        }
        self.persist()?;
        Ok(out)
    }

    /// Set the personality multiplier from the current cohort, if it can be determined.
    pub fn calibrate(&mut self) -> Option<f64> {
        let lambda = self.store.graph().calibrate_personality_multiplier()?;
        let mut cfg = *self.store.graph().config();
        cfg.personality_multiplier = lambda;
        self.store.set_config(cfg);
        self.config.matching.weights = cfg;
        Some(lambda)
    }

    pub fn retry_roster(&self) -> Vec<String> {
        self.named_roster()
    }

    pub fn commit_retry(&mut self, id: &str, outcome: Result<InferenceResult, String>) -> Result<StudentRecord, AppError> {
        let rec = match outcome {
            Ok(inf) => self.store.set_inference(id, inf)?.clone(),
            Err(e) => {
                self.store.set_error(id, e.clone())?;
                self.persist()?;
                return Err(AppError::Upstream(e));
            }
        };
        self.persist()?;
        Ok(rec)
    }

    /// Re-run inference for a stored student.
    pub fn retry(&mut self, id: &str) -> Result<StudentRecord, AppError> {
        let post = self.record(id)?.post.clone();
        let outcome = infer_traits(self.provider.as_ref(), &post, &self.retry_roster(), &self.policy()).map_err(|e| e.to_string());
        self.commit_retry(id, outcome)
    }

    pub fn record(&self, id: &str) -> Result<&StudentRecord, AppError> {
        self.store
            .get(id)
            .ok_or_else(|| MatchError::NotFound(id.to_string()).into())
    }

    pub fn traits_view(&self, id: &str) -> Result<TraitsView, AppError> {
        let rec = self.record(id)?;
        let mut rng = student_rng(self.config.seed, id);
        Ok(TraitsView {
            student_id: id.to_string(),
            summary: self.synonyms.trait_summary(&rec.profile, &mut rng),
            needs_retry: rec.needs_retry,
        })
    }

    pub fn matches_view(&self, id: &str, k: usize) -> Result<MatchesView, AppError> {
        if k == 0 {
            return Err(AppError::BadRequest("k must be at least 1".into()));
        }
        let me = &self.record(id)?.profile;
        let ranked = self.store.graph().top_matches(id, k)?;
        let matches = ranked
            .into_iter()
            .map(|m| {
                let other = &self.store.get(&m.student_id).expect("ranked students are stored").profile;
                let mut rng = seeded(pair_seed(self.config.seed, id, &m.student_id));
                MatchView {
                    display_name: other.display_name.clone(),
                    score: m.score,
                    shared_interests: m
                        .shared
                        .iter()
                        .filter(|c| !c.entity.is_personality())
                        .map(|c| c.entity.to_string())
                        .collect(),
                    shared_traits: self.synonyms.shared_trait_summary(me, other, &mut rng),
                    student_id: m.student_id,
                }
            })
            .collect();
        Ok(MatchesView {
            student_id: id.to_string(),
            k,
            matches,
        })
    }
}

fn meta(engine: &Engine, dataset: &str, scale: Scale, kind: ModelKind) -> ReportMeta {
    ReportMeta {
        model: engine.provider.model().to_string(),
        kind,
        scale,
        dataset: dataset.to_string(),
        seed: engine.config.seed,
    }
}

/// Zero-shot predictions for every row, with roster names redacted.
pub fn predict_rows(engine: &Engine, rows: &[NewStudent]) -> Vec<Result<[TraitLevel; 5], String>> {
    let roster: Vec<String> = rows.iter().flat_map(NewStudent::roster_names).collect();
    let posts: Vec<String> = rows.iter().map(|r| r.post.clone()).collect();
    infer_batch(
        engine.provider.as_ref(),
        &posts,
        &roster,
        &engine.policy(),
        engine.config.provider.live.max_in_flight,
    )
    .into_iter()
    .map(|r| r.map(|inf| inf.levels.as_array()).map_err(|e| e.to_string()))
    .collect()
}

/// Questionnaire scores for rows; every row must carry answers.
pub fn ground_truth(rows: &[NewStudent]) -> anyhow::Result<Vec<TraitScores>> {
    let key = ScoringKey::bfi44();
    rows.iter()
        .map(|r| {
            r.as_row()
                .scores(&key)?
                .ok_or_else(|| anyhow::anyhow!("student `{}` has no questionnaire answers", r.student_id))
        })
        .collect()
}

fn ids(rows: &[NewStudent]) -> Vec<String> {
    rows.iter().map(|r| r.student_id.clone()).collect()
}

/// Zero-shot metrics over every row on `scale`.
pub fn evaluate_zero_shot(engine: &Engine, rows: &[NewStudent], dataset: &str, scale: Scale) -> anyhow::Result<MetricsReport> {
    let scores = ground_truth(rows)?;
    let preds = predict_rows(engine, rows);
    let mut rng = stream_rng(engine.config.seed, streams::GOLD);
    let gold = gold_levels(&scores, &CutoffTable::bfi44(), scale, &mut rng)?;
    Ok(evaluate_predictions(meta(engine, dataset, scale, ModelKind::ZeroShot), &ids(rows), &preds, &gold)?)
}

pub fn evaluate_scales(engine: &Engine, rows: &[NewStudent], dataset: &str) -> anyhow::Result<ScaleComparison> {
    let scores = ground_truth(rows)?;
    let preds = predict_rows(engine, rows);
    let mut rng = stream_rng(engine.config.seed, streams::SCALES);
    Ok(compare_scales(
        meta(engine, dataset, Scale::Binary, ModelKind::ZeroShot),
        &ids(rows),
        &preds,
        &scores,
        &CutoffTable::bfi44(),
        &mut rng,
    )?)
}

/// Train the bagged MLP on zero-shot features and report on the 20% holdout.
pub fn evaluate_mlp(
    engine: &Engine,
    rows: &[NewStudent],
    dataset: &str,
    config: &EnsembleConfig,
) -> anyhow::Result<(persona_core::EnsembleModel, MetricsReport)> {
    let scores = ground_truth(rows)?;
    let features: Vec<Result<FeatureVector, String>> = predict_rows(engine, rows)
        .into_iter()
        .map(|r| r.map(|l| FeatureVector::from_levels(&persona_core::llm::TraitLevels::new(l).expect("binary"))))
        .collect();
    let mut gold_rng = stream_rng(engine.config.seed, streams::GOLD);
    let gold = gold_levels(&scores, &CutoffTable::bfi44(), Scale::Binary, &mut gold_rng)?;
    let mut rng = stream_rng(engine.config.seed, streams::ENSEMBLE);
    Ok(evaluate_ensemble(
        meta(engine, dataset, Scale::Binary, ModelKind::Mlp),
        &ids(rows),
        &features,
        &gold,
        config,
        &mut rng,
    )?)
}

/// Synthetic cohort as ingestion rows.
pub fn synthetic_students(n: usize, seed: u64) -> anyhow::Result<Vec<NewStudent>> {
    let cohort = generate_cohort(
        n,
        &DistributionSpec::default(),
        &ScoringKey::bfi44(),
        &mut stream_rng(seed, streams::COHORT),
    )?;
    Ok(cohort.iter().map(|s| DatasetRow::from(s).into()).collect())
}

pub fn cohort_stats(n: usize, seed: u64) -> anyhow::Result<SummaryStats> {
    let key = ScoringKey::bfi44();
    let cohort = generate_cohort(n, &DistributionSpec::default(), &key, &mut stream_rng(seed, streams::COHORT))?;
    Ok(summary_stats(&score_cohort(&cohort, &key))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedStudent {
    pub student_id: String,
    pub traits: TraitsView,
    pub matches: Vec<MatchView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub students: usize,
    pub cohort_sha256: String,
    pub cohort_stats: SummaryStats,
    pub zero_shot: MetricsReport,
    pub scales: ScaleComparison,
    pub mlp: MetricsReport,
    pub personality_multiplier: Option<f64>,
    pub snapshot_sha256: String,
    pub rendered: Vec<RenderedStudent>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Generate a cohort, ingest it with the mock provider, evaluate, calibrate,
/// match and render every student. A pure function of `(n, seed, correlation)`.
pub fn run_pipeline(n: usize, seed: u64, correlation: f64, k: usize) -> anyhow::Result<PipelineReport> {
    let mut config = AppConfig {
        seed,
        ..AppConfig::default()
    };
    config.provider.mock_correlation = correlation;
    let provider: Arc<dyn ChatProvider> = Arc::new(MockProvider::correlated(correlation));
    let store = Store::new(config.matching.weights);
    let mut engine = Engine::with_parts(config, provider, store)?;

    let rows = synthetic_students(n, seed)?;
    let mut cohort_bytes = Vec::new();
    persona_core::dataset::write_jsonl(&mut cohort_bytes, &rows)?;
    let stats = cohort_stats(n, seed)?;

    let zero_shot = evaluate_zero_shot(&engine, &rows, "synthetic", Scale::Binary)?;
    let scales = evaluate_scales(&engine, &rows, "synthetic")?;
    let (_, mlp) = evaluate_mlp(&engine, &rows, "synthetic", &EnsembleConfig::default())?;

    engine.ingest_all(&rows)?;
    let lambda = engine.calibrate();
    let rendered = rows
        .iter()
        .map(|r| {
            Ok(RenderedStudent {
                student_id: r.student_id.clone(),
                traits: engine.traits_view(&r.student_id)?,
                matches: engine.matches_view(&r.student_id, k)?.matches,
            })
        })
        .collect::<Result<Vec<_>, AppError>>()?;
    Ok(PipelineReport {
        seed,
        students: n,
        cohort_sha256: sha256_hex(&cohort_bytes),
        cohort_stats: stats,
        zero_shot,
        scales,
        mlp,
        personality_multiplier: lambda,
        snapshot_sha256: sha256_hex(engine.store.to_json().as_bytes()),
        rendered,
    })
}
