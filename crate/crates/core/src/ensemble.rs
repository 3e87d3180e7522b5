//! Per-trait bagging ensembles of MLPs over the five binary LLM predictions.
//!
//! Every trait gets its own ensemble; each member sees all five predicted bits and
//! is trained on a bootstrap resample of the training rows. Prediction is a
//! majority vote of members thresholded at 0.5.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binning::TraitLevel;
use crate::llm::TraitLevels;
use crate::mlp::Mlp;
use crate::scalar::Scalar;
use crate::seeding::stream_rng;
use crate::traits::Trait;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnsembleError {
    #[error("dataset has {0} rows, at least 5 are needed for an 80/20 split")]
    TooSmall(usize),
    #[error("training set is empty")]
    Empty,
    #[error("invalid ensemble config: {0}")]
    Config(String),
    #[error("model file has {0} trait ensembles, expected 5 in canonical order")]
    Incomplete(usize),
}

/// Five predicted bits in canonical O, C, E, A, N order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector(pub [u8; 5]);

impl FeatureVector {
    pub fn from_levels(levels: &TraitLevels) -> Self {
        Self(Trait::ALL.map(|t| u8::from(levels.get(t) == TraitLevel::High)))
    }

    /// All 32 possible inputs.
    pub fn all() -> impl Iterator<Item = FeatureVector> {
        (0u8..32).map(|m| Self(std::array::from_fn(|i| (m >> i) & 1)))
    }

    pub fn bit(&self, t: Trait) -> u8 {
        self.0[t.index()]
    }

    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|&b| T::of(b as f64)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub features: FeatureVector,
    /// Binary ground-truth level per trait.
    pub labels: [TraitLevel; 5],
}

impl LabeledRow {
    pub fn label(&self, t: Trait) -> TraitLevel {
        self.labels[t.index()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    pub fn new(rows: Vec<LabeledRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Shuffle with `rng` and split into `round(0.8 n)` training rows and the rest.
pub fn split_80_20<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    rng: &mut R,
) -> Result<(LabeledDataset, LabeledDataset), EnsembleError> {
    let n = dataset.len();
    if n < 5 {
        return Err(EnsembleError::TooSmall(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = (8 * n + 5) / 10;
    let pick = |ix: &[usize]| LabeledDataset::new(ix.iter().map(|&i| dataset.rows[i]).collect());
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub bags: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            epochs: 200,
            learning_rate: 0.1,
            bags: 11,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |m: &str| Err(EnsembleError::Config(m.into()));
        if self.hidden == 0 {
            return bad("hidden layer needs at least one unit");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.bags == 0 || self.bags % 2 == 0 {
            return bad("bag count must be odd");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Bootstrap resample of `n` indices drawn with replacement.
pub fn bootstrap_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TraitEnsemble<T: Scalar> {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub members: Vec<Mlp<T>>,
    pub config: EnsembleConfig,
    /// Seed of the per-bag RNG streams.
    pub seed: u64,
}

impl<T: Scalar> TraitEnsemble<T> {
    /// Each member's vote: `true` for an output above 0.5.
    pub fn member_votes(&self, fv: &FeatureVector) -> Vec<bool> {
        let x = fv.to_scalars::<T>();
        self.members
            .iter()
            .map(|m| m.forward(&x) > T::of(0.5))
            .collect()
    }

    pub fn predict(&self, fv: &FeatureVector) -> TraitLevel {
        let high = self.member_votes(fv).into_iter().filter(|&v| v).count();
        if 2 * high > self.members.len() {
            TraitLevel::High
        } else {
            TraitLevel::Low
        }
    }
}

/// Train one bagging ensemble for `trait_`. Bags are trained in parallel on
/// independent RNG streams, so the result depends only on the inputs and `rng`.
pub fn train_trait_ensemble<T: Scalar, R: Rng + ?Sized>(
    train: &LabeledDataset,
    trait_: Trait,
    config: &EnsembleConfig,
    rng: &mut R,
) -> Result<TraitEnsemble<T>, EnsembleError> {
    config.validate()?;
    if train.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let seed: u64 = rng.random();
    let xs: Vec<Vec<T>> = train.rows.iter().map(|r| r.features.to_scalars()).collect();
    let ys: Vec<T> = train
        .rows
        .iter()
        .map(|r| if r.label(trait_) == TraitLevel::High { T::one() } else { T::zero() })
        .collect();
    let sizes = [5, config.hidden, 1];
    let lr = T::of(config.learning_rate);
    let members = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.bags)
            .map(|bag| {
                let (xs, ys) = (&xs, &ys);
                scope.spawn(move || {
                    let mut r = stream_rng(seed, bag as u64);
                    let idx = bootstrap_indices(xs.len(), &mut r);
                    let bx: Vec<Vec<T>> = idx.iter().map(|&i| xs[i].clone()).collect();
                    let by: Vec<T> = idx.iter().map(|&i| ys[i]).collect();
                    let mut net = Mlp::new(&sizes, &mut r);
                    net.train(&bx, &by, config.epochs, lr);
                    net
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bag training thread"))
            .collect()
    });
    Ok(TraitEnsemble {
        trait_,
        members,
        config: *config,
        seed,
    })
}

/// Five trait ensembles, the unit saved to and loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EnsembleModel<T: Scalar> {
    pub seed: u64,
    pub ensembles: Vec<TraitEnsemble<T>>,
}

impl<T: Scalar> EnsembleModel<T> {
    /// Train all five ensembles, each from its own stream of `seed`.
    pub fn train(
        train: &LabeledDataset,
        config: &EnsembleConfig,
        seed: u64,
    ) -> Result<Self, EnsembleError> {
        let ensembles = Trait::ALL
            .iter()
            .map(|&t| train_trait_ensemble(train, t, config, &mut stream_rng(seed, 100 + t.index() as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { seed, ensembles })
    }

    pub fn predict(&self, fv: &FeatureVector) -> TraitLevels {
        TraitLevels::from_fn(|t| self.ensembles[t.index()].predict(fv)).expect("binary votes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        let ordered = self.ensembles.len() == 5
            && self.ensembles.iter().zip(Trait::ALL).all(|(e, t)| e.trait_ == t);
        if !ordered {
            return Err(EnsembleError::Incomplete(self.ensembles.len()));
        }
        for e in &self.ensembles {
            if e.members.is_empty() || e.members.len() % 2 == 0 {
                return Err(EnsembleError::Config("member count must be odd".into()));
            }
            if e.members.iter().any(|m| m.input_dim() != 5) {
                return Err(EnsembleError::Config("members must take 5 inputs".into()));
            }
        }
        Ok(())
    }
}
