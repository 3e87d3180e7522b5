//! Personality-aware peer matchmaking: questionnaire scoring, trait binning,
//! zero-shot trait inference through a chat-completion API, bagged MLP ensembles,
//! homophily matching, favourable-synonym presentation, evaluation and synthetic
//! cohorts.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod bfi;
pub mod binning;
pub mod cohort;
pub mod dataset;
pub mod ensemble;
pub mod evaluation;
pub mod llm;
pub mod matchmaking;
pub mod mlp;
pub mod presentation;
pub mod scalar;
pub mod seeding;
pub mod traits;

pub use binning::{Scale, TraitLevel};
pub use scalar::Exact;
pub use traits::{SelectedTrait, Trait};

pub type Mlp = mlp::Mlp<f64>;
pub type TraitEnsemble = ensemble::TraitEnsemble<f64>;
pub type EnsembleModel = ensemble::EnsembleModel<f64>;
pub type MetricsReport = evaluation::MetricsReport<f64>;
pub type ScaleComparison = evaluation::ScaleComparison<f64>;
pub type SummaryStats = cohort::SummaryStats<f64>;
