//! Synthetic cohorts whose trait-mean distributions follow configurable
//! mean/std/skew targets, plus Table-1 style descriptive statistics.
//!
//! Each student's per-trait target mean is drawn from a Beta distribution rescaled
//! to [1, 5] with shape parameters fitted by the method of moments (left skew comes
//! out as alpha > beta). Item answers are Gaussian perturbations around the target,
//! rounded and clipped to the Likert range, then nudged one point at a time until
//! the trait sum equals the rounded target sum. Traits are drawn independently.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bfi::{score_bfi44, QuestionnaireResponse, ScoringKey, TraitScores, ITEM_COUNT};
use crate::scalar::Scalar;
use crate::seeding::stream_rng;
use crate::traits::Trait;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CohortError {
    #[error("infeasible distribution for {trait_}: {message}")]
    Infeasible { trait_: Trait, message: String },
    #[error("cohort is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skew {
    Left,
    None,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitDistribution {
    /// Target mean on the 1..5 item scale.
    pub mean: f64,
    pub std: f64,
    pub skew: Skew,
}

impl TraitDistribution {
    /// Beta shape parameters on [1, 5] matching `mean` and `std`.
    pub fn beta_shape(&self) -> (f64, f64) {
        let x = (self.mean - 1.0) / 4.0;
        let v = (self.std / 4.0).powi(2);
        let common = x * (1.0 - x) / v - 1.0;
        (x * common, (1.0 - x) * common)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub traits: [TraitDistribution; 5],
}

impl Default for DistributionSpec {
    /// The reference cohort: O 3.69/0.52, C 3.63/0.56, E 3.01/0.73, A 3.79/0.60, N 2.88/0.76.
    fn default() -> Self {
        let d = |mean, std, skew| TraitDistribution { mean, std, skew };
        Self {
            traits: [
                d(3.69, 0.52, Skew::Left),
                d(3.63, 0.56, Skew::Left),
                d(3.01, 0.73, Skew::None),
                d(3.79, 0.60, Skew::Left),
                d(2.88, 0.76, Skew::Right),
            ],
        }
    }
}

impl DistributionSpec {
    pub fn get(&self, t: Trait) -> TraitDistribution {
        self.traits[t.index()]
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        for t in Trait::ALL {
            let d = self.get(t);
            let fail = |m: String| {
                Err(CohortError::Infeasible {
                    trait_: t,
                    message: m,
                })
            };
            if !(d.mean > 1.0 && d.mean < 5.0) {
                return fail(format!("mean {} outside (1, 5)", d.mean));
            }
            let x = (d.mean - 1.0) / 4.0;
            let max_std = 4.0 * (x * (1.0 - x)).sqrt();
            if !(d.std > 0.0 && d.std < max_std) {
                return fail(format!("std {} outside (0, {max_std:.3})", d.std));
            }
            let (a, b) = d.beta_shape();
            let consistent = match d.skew {
                Skew::Left => a > b,
                Skew::Right => a < b,
                Skew::None => true,
            };
            if !consistent {
                return fail(format!("{:?} skew impossible with mean {}", d.skew, d.mean));
            }
        }
        Ok(())
    }
}

/// Generation parameters embedded in a synthetic post, e.g. `[gen O=3.812 C=...]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationTag {
    pub means: [f64; 5],
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\[gen O=([0-9.]+) C=([0-9.]+) E=([0-9.]+) A=([0-9.]+) N=([0-9.]+)\]")
            .expect("valid regex")
    })
}

impl GenerationTag {
    pub fn new(means: [f64; 5]) -> Self {
        Self { means }
    }

    pub fn mean(&self, t: Trait) -> f64 {
        self.means[t.index()]
    }

    /// First tag in `text`, if any.
    pub fn find(text: &str) -> Option<Self> {
        let caps = tag_regex().captures(text)?;
        let mut means = [0.0; 5];
        for (i, m) in means.iter_mut().enumerate() {
            *m = caps[i + 1].parse().ok()?;
        }
        Some(Self { means })
    }
}

impl fmt::Display for GenerationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.means;
        write!(
            f,
            "[gen O={:.3} C={:.3} E={:.3} A={:.3} N={:.3}]",
            m[0], m[1], m[2], m[3], m[4]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntitySpec {
    pub category: String,
    pub value: String,
}

/// One generated student: post stub, questionnaire answers and generation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStudent {
    pub student_id: String,
    pub post: String,
    pub answers: Vec<i64>,
    pub entities: Vec<EntitySpec>,
    pub generation: GenerationTag,
}

impl SyntheticStudent {
    pub fn response(&self) -> QuestionnaireResponse {
        QuestionnaireResponse {
            student_id: self.student_id.clone(),
            answers: self.answers.clone(),
        }
    }
}

const HOBBIES: [&str; 12] = [
    "chess", "hiking", "cooking", "photography", "running", "gaming", "reading", "gardening",
    "music", "cycling", "painting", "travel",
];
const LOCATIONS: [&str; 6] = ["atlanta", "new york", "seattle", "london", "bangalore", "toronto"];

const ITEM_NOISE_STD: f64 = 0.75;

fn sample_items<R: Rng + ?Sized>(target_mean: f64, count: usize, rng: &mut R) -> Vec<i64> {
    let noise = Normal::new(0.0, ITEM_NOISE_STD).expect("valid normal");
    let k = count as i64;
    let target_sum = ((target_mean * count as f64 + 0.5).floor() as i64).clamp(k, 5 * k);
    let mut points: Vec<i64> = (0..count)
        .map(|_| ((target_mean + noise.sample(rng)).round() as i64).clamp(1, 5))
        .collect();
    let mut diff = target_sum - points.iter().sum::<i64>();
    while diff != 0 {
        let step = diff.signum();
        let movable: Vec<usize> = (0..count)
            .filter(|&i| (1..=5).contains(&(points[i] + step)))
            .collect();
        let i = movable[rng.random_range(0..movable.len())];
        points[i] += step;
        diff -= step;
    }
    points
}

/// Generate `n` synthetic students. Student `i` is drawn from its own RNG stream
/// seeded by one draw from `rng`.
pub fn generate_cohort<R: Rng + ?Sized>(
    n: usize,
    spec: &DistributionSpec,
    key: &ScoringKey,
    rng: &mut R,
) -> Result<Vec<SyntheticStudent>, CohortError> {
    spec.validate()?;
    let betas: Vec<Beta<f64>> = Trait::ALL
        .iter()
        .map(|&t| {
            let (a, b) = spec.get(t).beta_shape();
            Beta::new(a, b).map_err(|e| CohortError::Infeasible {
                trait_: t,
                message: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    let base: u64 = rng.random();
    let width = n.saturating_sub(1).to_string().len().max(4);
    Ok((0..n)
        .map(|i| {
            let mut r = stream_rng(base, i as u64);
            let means: [f64; 5] = std::array::from_fn(|t| 1.0 + 4.0 * betas[t].sample(&mut r));
            let mut answers = vec![0i64; ITEM_COUNT];
            for t in Trait::ALL {
                let items: Vec<usize> = (1..=ITEM_COUNT).filter(|&j| key.item(j).trait_ == t).collect();
                let points = sample_items(means[t.index()], items.len(), &mut r);
                for (&j, p) in items.iter().zip(points) {
                    answers[j - 1] = if key.item(j).reverse { 6 - p } else { p };
                }
            }
            let n_hobbies = r.random_range(1..=3);
            let mut hobbies: Vec<&str> = Vec::new();
            while hobbies.len() < n_hobbies {
                let h = HOBBIES[r.random_range(0..HOBBIES.len())];
                if !hobbies.contains(&h) {
                    hobbies.push(h);
                }
            }
            hobbies.sort_unstable();
            let location = LOCATIONS[r.random_range(0..LOCATIONS.len())];
            let tag = GenerationTag::new(means);
            let student_id = format!("s{i:0width$}");
            let post = format!(
                "Hi everyone! I'm joining from {location}. Outside of work I enjoy {}. Looking forward to the course! {tag}",
                hobbies.join(", ")
            );
            let mut entities: Vec<EntitySpec> = hobbies
                .iter()
                .map(|h| EntitySpec {
                    category: "hobby".into(),
                    value: (*h).into(),
                })
                .collect();
            entities.push(EntitySpec {
                category: "location".into(),
                value: location.into(),
            });
            SyntheticStudent {
                student_id,
                post,
                answers,
                entities,
                generation: tag,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TraitStats<T: Scalar> {
    pub count: usize,
    pub mean: T,
    /// Sample standard deviation (n - 1 denominator).
    pub std: T,
    pub min: T,
    pub q25: T,
    pub median: T,
    pub q75: T,
    pub max: T,
    /// Fisher-Pearson moment coefficient of skewness.
    pub skewness: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SummaryStats<T: Scalar> {
    pub traits: Vec<TraitStats<T>>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn describe<T: Scalar>(mut xs: Vec<T>) -> TraitStats<T> {
    let n = xs.len();
    let nf = T::of_usize(n);
    let mean = xs.iter().copied().sum::<T>() / nf;
    let m2 = xs.iter().map(|&x| (x - mean).powi(2)).sum::<T>();
    let m3 = xs.iter().map(|&x| (x - mean).powi(3)).sum::<T>();
    let std = if n > 1 { (m2 / T::of_usize(n - 1)).sqrt() } else { T::zero() };
    let pop_var = m2 / nf;
    let skewness = if pop_var > T::zero() {
        (m3 / nf) / pop_var.powf(T::of(1.5))
    } else {
        T::zero()
    };
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    TraitStats {
        count: n,
        mean,
        std,
        min: xs[0],
        q25: quantile(&xs, 0.25),
        median: quantile(&xs, 0.5),
        q75: quantile(&xs, 0.75),
        max: xs[n - 1],
        skewness,
    }
}

/// Descriptive statistics of per-trait mean scores.
pub fn summary_stats<T: Scalar>(scores: &[TraitScores]) -> Result<SummaryStats<T>, CohortError> {
    if scores.is_empty() {
        return Err(CohortError::Empty);
    }
    let traits = Trait::ALL
        .iter()
        .map(|&t| describe(scores.iter().map(|s| T::of(s.get(t).mean_f64())).collect()))
        .collect();
    Ok(SummaryStats { traits })
}

/// Score every generated student.
pub fn score_cohort(cohort: &[SyntheticStudent], key: &ScoringKey) -> Vec<TraitScores> {
    cohort
        .iter()
        .map(|s| score_bfi44(&s.response(), key).expect("generated responses are valid"))
        .collect()
}

impl<T: Scalar> SummaryStats<T> {
    pub fn get(&self, t: Trait) -> &TraitStats<T> {
        &self.traits[t.index()]
    }

    /// Text table with the eight descriptive rows, traits as columns.
    pub fn render_table(&self) -> String {
        let mut out = String::from("Statistic      O       C       E       A       N\n");
        let row = |name: &str, f: &dyn Fn(&TraitStats<T>) -> String| {
            let cells: Vec<String> = self.traits.iter().map(|s| format!("{:>7}", f(s))).collect();
            format!("{name:<9}{}\n", cells.join(" "))
        };
        let num = |v: T| format!("{:.2}", v.to_f64_lossy());
        out.push_str(&row("Count", &|s| s.count.to_string()));
        out.push_str(&row("Mean", &|s| num(s.mean)));
        out.push_str(&row("Std Dev", &|s| num(s.std)));
        out.push_str(&row("Min", &|s| num(s.min)));
        out.push_str(&row("25%", &|s| num(s.q25)));
        out.push_str(&row("50%", &|s| num(s.median)));
        out.push_str(&row("75%", &|s| num(s.q75)));
        out.push_str(&row("Max", &|s| num(s.max)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfi::validate_response;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_cohort() {
        let c = generate_cohort(0, &DistributionSpec::default(), &ScoringKey::bfi44(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(c.is_empty());
        assert_eq!(summary_stats::<f64>(&[]), Err(CohortError::Empty));
    }

    #[test]
    fn infeasible_spec_rejected() {
        let mut spec = DistributionSpec::default();
        spec.traits[2].mean = 5.5;
        assert!(matches!(spec.validate(), Err(CohortError::Infeasible { trait_: Trait::Extroversion, .. })));
        let mut spec = DistributionSpec::default();
        spec.traits[4].skew = Skew::Left;
        assert!(spec.validate().is_err());
        let mut spec = DistributionSpec::default();
        spec.traits[0].std = 2.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn default_shapes_follow_skew_direction() {
        let spec = DistributionSpec::default();
        for t in [Trait::Openness, Trait::Conscientiousness, Trait::Agreeableness] {
            let (a, b) = spec.get(t).beta_shape();
            assert!(a > b, "{t}");
        }
        let (a, b) = spec.get(Trait::Neuroticism).beta_shape();
        assert!(a < b);
    }

    #[test]
    fn generated_rows_valid_and_hit_targets() {
        let key = ScoringKey::bfi44();
        let c = generate_cohort(200, &DistributionSpec::default(), &key, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for s in &c {
            assert!(validate_response(&s.response()).is_empty());
            let scores = score_bfi44(&s.response(), &key).unwrap();
            for t in Trait::ALL {
                let k = key.item_count(t) as f64;
                let want = (s.generation.mean(t) * k + 0.5).floor().clamp(k, 5.0 * k);
                assert_eq!(scores.sum(t) as f64, want);
                let m = scores.get(t).mean_f64();
                assert!((1.0..=5.0).contains(&m));
            }
            assert_eq!(GenerationTag::find(&s.post).map(|g| g.to_string()), Some(s.generation.to_string()));
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let key = ScoringKey::bfi44();
        let spec = DistributionSpec::default();
        let a = generate_cohort(30, &spec, &key, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = generate_cohort(30, &spec, &key, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        let c = generate_cohort(30, &spec, &key, &mut ChaCha8Rng::seed_from_u64(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_student_stats() {
        let key = ScoringKey::bfi44();
        let c = generate_cohort(1, &DistributionSpec::default(), &key, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let scores = score_cohort(&c, &key);
        let stats = summary_stats::<f64>(&scores).unwrap();
        for t in Trait::ALL {
            let s = stats.get(t);
            assert_eq!(s.mean, scores[0].get(t).mean_f64());
            assert_eq!(s.std, 0.0);
            assert_eq!(s.min, s.max);
        }
    }

    #[test]
    fn table_has_eight_rows() {
        let key = ScoringKey::bfi44();
        let c = generate_cohort(20, &DistributionSpec::default(), &key, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let table = summary_stats::<f32>(&score_cohort(&c, &key)).unwrap().render_table();
        let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
        assert_eq!(rows, vec!["Count", "Mean", "Std", "Min", "25%", "50%", "75%", "Max"]);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }
}
