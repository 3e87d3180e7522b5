//! Accuracy and F1 against binned questionnaire ground truth, plus report tables.
//!
//! F1 always treats High as the positive class; on the three-level scale Low and
//! Middle are both negative.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{BinningError, CutoffTable, Scale, TraitLevel};
use crate::bfi::TraitScores;
use crate::ensemble::{split_80_20, EnsembleConfig, EnsembleError, EnsembleModel, FeatureVector, LabeledDataset, LabeledRow};
use crate::scalar::{round_half_up, Scalar};
use crate::traits::Trait;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{preds} predictions for {gold} gold labels")]
    LengthMismatch { preds: usize, gold: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("{0} scale has no categorical levels to evaluate")]
    UnsupportedScale(Scale),
    #[error("row `{0}` has no questionnaire answers")]
    MissingGroundTruth(String),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn check_lengths(preds: usize, gold: usize) -> Result<(), EvalError> {
    if preds != gold {
        return Err(EvalError::LengthMismatch { preds, gold });
    }
    if preds == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

impl ConfusionCounts {
    pub fn from_levels(preds: &[TraitLevel], gold: &[TraitLevel]) -> Result<Self, EvalError> {
        check_lengths(preds.len(), gold.len())?;
        let mut c = Self::default();
        for (&p, &g) in preds.iter().zip(gold) {
            c.add(p == TraitLevel::High, g == TraitLevel::High);
        }
        Ok(c)
    }

    pub fn add(&mut self, predicted_high: bool, gold_high: bool) {
        match (predicted_high, gold_high) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `2tp / (2tp + fp + fn)`, 0 when nothing is positive.
    pub fn f1<T: Scalar>(&self) -> T {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return T::zero();
        }
        T::of(2.0 * self.tp as f64) / T::of(denom as f64)
    }
}

/// Fraction of exact level matches.
pub fn accuracy<T: Scalar>(preds: &[TraitLevel], gold: &[TraitLevel]) -> Result<T, EvalError> {
    check_lengths(preds.len(), gold.len())?;
    let hits = preds.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(T::of_usize(hits) / T::of_usize(gold.len()))
}

pub fn f1<T: Scalar>(preds: &[TraitLevel], gold: &[TraitLevel]) -> Result<T, EvalError> {
    Ok(ConfusionCounts::from_levels(preds, gold)?.f1())
}

/// Unweighted arithmetic mean.
pub fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::of_usize(values.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Prompted model with no training: evaluated on every row.
    ZeroShot,
    /// Bagged MLP over zero-shot predictions: trained on 80%, evaluated on the held-out 20%.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: String,
    pub kind: ModelKind,
    pub scale: Scale,
    pub dataset: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TraitMetrics<T: Scalar> {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub n: usize,
    pub accuracy: T,
    pub f1: T,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowFailure {
    pub student_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MetricsReport<T: Scalar> {
    pub meta: ReportMeta,
    pub rows_evaluated: usize,
    /// True when some rows could not be predicted and were left out.
    pub partial: bool,
    pub failures: Vec<RowFailure>,
    pub traits: Vec<TraitMetrics<T>>,
    pub overall_accuracy: T,
    pub overall_f1: T,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn get(&self, t: Trait) -> &TraitMetrics<T> {
        &self.traits[t.index()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Binned ground truth per row, traits in canonical order. Binary midpoint ties
/// draw from `rng` row by row, trait by trait.
pub fn gold_levels<R: Rng + ?Sized>(
    scores: &[TraitScores],
    cutoffs: &CutoffTable,
    scale: Scale,
    rng: &mut R,
) -> Result<Vec<[TraitLevel; 5]>, EvalError> {
    if scale == Scale::FivePoint {
        return Err(EvalError::UnsupportedScale(scale));
    }
    scores
        .iter()
        .map(|s| {
            let mut out = [TraitLevel::Low; 5];
            for t in Trait::ALL {
                out[t.index()] = cutoffs.bin_level(t, s.get(t).sum, scale, rng)?;
            }
            Ok(out)
        })
        .collect()
}

/// Build a report from per-row predictions; failed rows are listed and skipped.
pub fn evaluate_predictions<T: Scalar>(
    meta: ReportMeta,
    ids: &[String],
    preds: &[Result<[TraitLevel; 5], String>],
    gold: &[[TraitLevel; 5]],
) -> Result<MetricsReport<T>, EvalError> {
    check_lengths(preds.len(), gold.len())?;
    check_lengths(ids.len(), gold.len())?;
    let mut failures = Vec::new();
    let mut kept_p = Vec::new();
    let mut kept_g = Vec::new();
    for ((id, p), g) in ids.iter().zip(preds).zip(gold) {
        match p {
            Ok(p) => {
                kept_p.push(*p);
                kept_g.push(*g);
            }
            Err(e) => failures.push(RowFailure {
                student_id: id.clone(),
                error: e.clone(),
            }),
        }
    }
    if kept_p.is_empty() {
        return Err(EvalError::Empty);
    }
    let traits: Vec<TraitMetrics<T>> = Trait::ALL
        .iter()
        .map(|&t| {
            let p: Vec<TraitLevel> = kept_p.iter().map(|r| r[t.index()]).collect();
            let g: Vec<TraitLevel> = kept_g.iter().map(|r| r[t.index()]).collect();
            let counts = ConfusionCounts::from_levels(&p, &g)?;
            Ok(TraitMetrics {
                trait_: t,
                n: p.len(),
                accuracy: accuracy(&p, &g)?,
                f1: counts.f1(),
                counts,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let accs: Vec<T> = traits.iter().map(|m| m.accuracy).collect();
    let f1s: Vec<T> = traits.iter().map(|m| m.f1).collect();
    Ok(MetricsReport {
        meta,
        rows_evaluated: kept_p.len(),
        partial: !failures.is_empty(),
        failures,
        overall_accuracy: mean(&accs),
        overall_f1: mean(&f1s),
        traits,
    })
}

/// Zero-shot evaluation over every row: bin ground truth, predict each post, score.
pub fn evaluate_model<T, F, R>(
    predict: F,
    ids: &[String],
    posts: &[String],
    scores: &[TraitScores],
    cutoffs: &CutoffTable,
    meta: ReportMeta,
    rng: &mut R,
) -> Result<MetricsReport<T>, EvalError>
where
    T: Scalar,
    F: Fn(&str) -> Result<[TraitLevel; 5], String>,
    R: Rng + ?Sized,
{
    check_lengths(posts.len(), scores.len())?;
    let gold = gold_levels(scores, cutoffs, meta.scale, rng)?;
    let preds: Vec<_> = posts.iter().map(|p| predict(p)).collect();
    evaluate_predictions(ReportMeta { kind: ModelKind::ZeroShot, ..meta }, ids, &preds, &gold)
}

/// Binary and three-level reports over the same predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ScaleComparison<T: Scalar> {
    pub binary: MetricsReport<T>,
    pub trinary: MetricsReport<T>,
}

/// Score one set of predictions against both categorical scales. The five-point
/// scale is left out.
pub fn compare_scales<T: Scalar, R: Rng + ?Sized>(
    meta: ReportMeta,
    ids: &[String],
    preds: &[Result<[TraitLevel; 5], String>],
    scores: &[TraitScores],
    cutoffs: &CutoffTable,
    rng: &mut R,
) -> Result<ScaleComparison<T>, EvalError> {
    let gold_b = gold_levels(scores, cutoffs, Scale::Binary, rng)?;
    let gold_t = gold_levels(scores, cutoffs, Scale::Trinary, rng)?;
    Ok(ScaleComparison {
        binary: evaluate_predictions(ReportMeta { scale: Scale::Binary, ..meta.clone() }, ids, preds, &gold_b)?,
        trinary: evaluate_predictions(ReportMeta { scale: Scale::Trinary, ..meta }, ids, preds, &gold_t)?,
    })
}

/// Train a bagged MLP on 80% of the rows with zero-shot predictions as features
/// and report on the held-out 20%. Rows whose zero-shot prediction failed are
/// dropped before the split.
pub fn evaluate_ensemble<T: Scalar, R: Rng + ?Sized>(
    meta: ReportMeta,
    ids: &[String],
    features: &[Result<FeatureVector, String>],
    gold: &[[TraitLevel; 5]],
    config: &EnsembleConfig,
    rng: &mut R,
) -> Result<(EnsembleModel<T>, MetricsReport<T>), EvalError> {
    check_lengths(features.len(), gold.len())?;
    check_lengths(ids.len(), gold.len())?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for ((id, f), g) in ids.iter().zip(features).zip(gold) {
        match f {
            Ok(f) => rows.push(LabeledRow { features: *f, labels: *g }),
            Err(e) => failures.push(RowFailure {
                student_id: id.clone(),
                error: e.clone(),
            }),
        }
    }
    let (train, test) = split_80_20(&LabeledDataset::new(rows), rng)?;
    let model = EnsembleModel::<T>::train(&train, config, rng.random())?;
    let preds: Vec<Result<[TraitLevel; 5], String>> = test
        .rows
        .iter()
        .map(|r| Ok(model.predict(&r.features).as_array()))
        .collect();
    let test_gold: Vec<[TraitLevel; 5]> = test.rows.iter().map(|r| r.labels).collect();
    let test_ids: Vec<String> = (0..test.len()).map(|i| format!("holdout-{i}")).collect();
    let mut report = evaluate_predictions(
        ReportMeta { kind: ModelKind::Mlp, scale: Scale::Binary, ..meta },
        &test_ids,
        &preds,
        &test_gold,
    )?;
    report.partial = !failures.is_empty();
    report.failures = failures;
    Ok((model, report))
}

fn two(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

fn pct(x: f64) -> String {
    format!("{:.2}", round_half_up(100.0 * x, 2))
}

/// Side-by-side table: trait rows O, C, E, A, N then Overall, two decimals.
pub fn render_scale_comparison<T: Scalar>(c: &ScaleComparison<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<26}| {}", "Low | High Scale", "Low | Middle | High Scale");
    let _ = writeln!(out, "{:<9}{:>6}{:>6}     | {:<9}{:>6}{:>6}", "Trait", "Acc", "F1", "Trait", "Acc", "F1");
    let row = |name: &str, a: f64, f: f64| format!("{name:<9}{:>6}{:>6}", two(a), two(f));
    for t in Trait::ALL {
        let b = c.binary.get(t);
        let m = c.trinary.get(t);
        let _ = writeln!(
            out,
            "{}     | {}",
            row(&t.letter().to_string(), b.accuracy.to_f64_lossy(), b.f1.to_f64_lossy()),
            row(&t.letter().to_string(), m.accuracy.to_f64_lossy(), m.f1.to_f64_lossy())
        );
    }
    let _ = writeln!(
        out,
        "{}     | {}",
        row("Overall", c.binary.overall_accuracy.to_f64_lossy(), c.binary.overall_f1.to_f64_lossy()),
        row("Overall", c.trinary.overall_accuracy.to_f64_lossy(), c.trinary.overall_f1.to_f64_lossy())
    );
    out
}

/// Column order of the per-model table.
pub const MODEL_TABLE_ORDER: [Trait; 5] = [
    Trait::Openness,
    Trait::Extroversion,
    Trait::Agreeableness,
    Trait::Conscientiousness,
    Trait::Neuroticism,
];

/// One row per model, `Acc/F1` percentages per trait and the average.
pub fn render_model_table<T: Scalar>(reports: &[&MetricsReport<T>]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<20}", "Model");
    for t in MODEL_TABLE_ORDER {
        let _ = write!(out, " {:>13}", format!("{} (Acc/F1)", t.letter()));
    }
    let _ = writeln!(out, " {:>13}", "Average");
    for r in reports {
        let _ = write!(out, "{:<20}", r.meta.model);
        for t in MODEL_TABLE_ORDER {
            let m = r.get(t);
            let cell = format!("{}/{}", pct(m.accuracy.to_f64_lossy()), pct(m.f1.to_f64_lossy()));
            let _ = write!(out, " {cell:>13}");
        }
        let avg = format!("{}/{}", pct(r.overall_accuracy.to_f64_lossy()), pct(r.overall_f1.to_f64_lossy()));
        let _ = writeln!(out, " {avg:>13}");
    }
    out
}
