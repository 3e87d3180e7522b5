//! Command line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use persona_core::binning::{Binned, CutoffTable};
use persona_core::bfi::{read_questionnaire_csv, score_bfi44, QuestionnaireResponse, ScoringKey};
use persona_core::cohort::{generate_cohort, DistributionSpec};
use persona_core::ensemble::{EnsembleConfig, FeatureVector};
use persona_core::evaluation::{render_model_table, render_scale_comparison};
use persona_core::llm::{infer_traits, TraitLevels};
use persona_core::seeding::stream_rng;
use persona_core::{EnsembleModel, Exact, Scale, Trait, TraitLevel};
use serde_json::json;

use crate::config::{AppConfig, ProviderKind};
use crate::pipeline::{self, streams, Engine};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(name = "persona", version, about = "Personality-aware peer matching from introduction posts")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every randomized step (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trait inference backend (overrides the config).
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalModel {
    ZeroShot,
    Mlp,
}

fn parse_trait(s: &str) -> Result<Trait, String> {
    s.parse().map_err(|e: persona_core::traits::ParseTraitError| e.to_string())
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse().map_err(|e: persona_core::binning::BinningError| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score BFI-44 questionnaires into per-trait sums and means.
    Score {
        /// Students JSONL with `answers`.
        #[arg(long, conflicts_with_all = ["csv", "answers"])]
        dataset: Option<PathBuf>,
        /// CSV with a student_id column and 44 item columns.
        #[arg(long, conflicts_with = "answers")]
        csv: Option<PathBuf>,
        /// 44 comma-separated answers.
        #[arg(long, value_delimiter = ',')]
        answers: Option<Vec<i64>>,
    },
    /// Bin a trait sum on a scale.
    Bin {
        #[arg(long = "trait", value_parser = parse_trait)]
        trait_: Trait,
        /// Integer or fraction such as `70/3`.
        #[arg(long)]
        sum: String,
        #[arg(long, value_parser = parse_scale, default_value = "binary")]
        scale: Scale,
    },
    /// Infer trait levels for a post or every post in a dataset.
    Infer {
        #[arg(long, conflicts_with = "dataset")]
        text: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Names to redact before the post leaves the process.
        #[arg(long = "name")]
        names: Vec<String>,
    },
    /// Train the bagged MLP on zero-shot features and save it.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict with a saved MLP from a post or a feature string such as `10110`.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "features")]
        text: Option<String>,
        #[arg(long)]
        features: Option<String>,
    },
    /// Accuracy and F1 against questionnaire ground truth.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_scale)]
        scale: Option<Scale>,
        #[arg(long, value_enum, default_value = "zero-shot")]
        model: EvalModel,
    },
    /// The same predictions scored on the binary and three-level scales.
    CompareScales {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Top matches for a student.
    Match {
        #[arg(long)]
        student: String,
        #[arg(long)]
        k: Option<usize>,
        /// Build the graph from this JSONL instead of the snapshot.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Write a synthetic cohort as JSONL.
    GenCohort {
        #[arg(long, default_value_t = 226)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print summary statistics instead of rows.
        #[arg(long)]
        stats: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Ingest a JSONL file into the snapshot.
    Ingest {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Show a student's trait summary.
    Render {
        #[arg(long)]
        student: String,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Generate, ingest, evaluate, match and render in one deterministic report.
    Pipeline {
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = persona_core::matchmaking::DEFAULT_TOP_K)]
        k: usize,
        /// Mock provider correlation with the generated personalities.
        #[arg(long)]
        correlation: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Cli {
    pub fn app_config(&self) -> anyhow::Result<AppConfig> {
        let mut cfg = match &self.config {
            Some(p) => AppConfig::load(p)?,
            None => AppConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.provider {
            cfg.provider.kind = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<W: Write, T: serde::Serialize>(out: &mut W, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn dataset_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Engine with an empty store filled from `dataset`.
fn engine_from_dataset(mut cfg: AppConfig, dataset: &Path) -> anyhow::Result<Engine> {
    let rows = pipeline::read_students_file(dataset)?;
    cfg.paths.snapshot = None;
    let provider = cfg.provider()?;
    let store = Store::new(cfg.matching.weights);
    let mut engine = Engine::with_parts(cfg, provider, store)?;
    engine.ingest_all(&rows)?;
    Ok(engine)
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> anyhow::Result<()> {
    let cfg = cli.app_config()?;
    let json_out = cli.json;
    match cli.command {
        Command::Score { dataset, csv, answers } => {
            let key = ScoringKey::bfi44();
            let responses: Vec<QuestionnaireResponse> = if let Some(a) = answers {
                vec![QuestionnaireResponse::new("cli", a)?]
            } else if let Some(p) = csv {
                let f = std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
                read_questionnaire_csv(f)?
            } else if let Some(p) = dataset {
                pipeline::read_students_file(&p)?
                    .iter()
                    .filter_map(|s| s.as_row().response())
                    .collect()
            } else {
                bail!("one of --answers, --csv or --dataset is required");
            };
            let mut rows = Vec::new();
            for r in &responses {
                let s = score_bfi44(r, &key)?;
                rows.push(json!({
                    "student_id": r.student_id,
                    "sums": Trait::ALL.map(|t| s.sum(t)),
                    "means": Trait::ALL.map(|t| s.get(t).mean_f64()),
                }));
            }
            if json_out {
                print_json(out, &rows)?;
            } else {
                writeln!(out, "{:<12} {:>4} {:>4} {:>4} {:>4} {:>4}", "student", "O", "C", "E", "A", "N")?;
                for r in &responses {
                    let s = score_bfi44(r, &key)?;
                    let sums = Trait::ALL.map(|t| s.sum(t));
                    writeln!(
                        out,
                        "{:<12} {:>4} {:>4} {:>4} {:>4} {:>4}",
                        r.student_id, sums[0], sums[1], sums[2], sums[3], sums[4]
                    )?;
                }
            }
        }
        Command::Bin { trait_, sum, scale } => {
            let value: Exact = sum.trim().parse().map_err(|_| anyhow::anyhow!("`{sum}` is not a number or fraction"))?;
            let cut = CutoffTable::bfi44();
            let tie = scale == Scale::Binary && value == Exact::from_integer(cut.get(trait_).midpoint as i64);
            let mut rng = stream_rng(cfg.seed, streams::BIN);
            let binned = cut.bin(trait_, value, scale, &mut rng)?;
            let shown = match binned {
                Binned::Level(l) => l.to_string(),
                Binned::Point(p) => p.to_string(),
            };
            if json_out {
                print_json(
                    out,
                    &json!({
                        "trait": trait_.name(),
                        "sum": value.to_string(),
                        "scale": scale.name(),
                        "result": shown,
                        "midpoint_tie": tie,
                        "seed": cfg.seed,
                    }),
                )?;
            } else {
                let note = if tie { " (midpoint tie, broken by the seeded coin)" } else { "" };
                writeln!(out, "{} sum {} on the {} scale: {shown}{note}", trait_.name(), value, scale.name())?;
            }
        }
        Command::Infer { text, dataset, names } => {
            let engine = Engine::with_parts(cfg.clone(), cfg.provider()?, Store::default())?;
            let items: Vec<(String, String)> = match (text, dataset) {
                (Some(t), _) => vec![("text".into(), t)],
                (None, Some(p)) => pipeline::read_students_file(&p)?
                    .into_iter()
                    .map(|s| (s.student_id, s.post))
                    .collect(),
                (None, None) => bail!("one of --text or --dataset is required"),
            };
            let mut results = Vec::new();
            for (id, post) in &items {
                let r = infer_traits(engine.provider.as_ref(), post, &names, &engine.policy());
                results.push(match r {
                    Ok(inf) => json!({ "id": id, "levels": inf.levels, "provenance": inf.provenance }),
                    Err(e) => json!({ "id": id, "error": e.to_string() }),
                });
            }
            if json_out {
                print_json(out, &results)?;
            } else {
                for (res, (id, _)) in results.iter().zip(&items) {
                    match res.get("levels") {
                        Some(l) => writeln!(out, "{id}: {}", levels_line(l))?,
                        None => writeln!(out, "{id}: error: {}", res["error"].as_str().unwrap_or_default())?,
                    }
                }
            }
        }
        Command::Train { dataset, out: path } => {
            let rows = pipeline::read_students_file(&dataset)?;
            let engine = Engine::with_parts(cfg.clone(), cfg.provider()?, Store::default())?;
            let (model, report) = pipeline::evaluate_mlp(&engine, &rows, &dataset_name(&dataset), &EnsembleConfig::default())?;
            std::fs::write(&path, model.to_json()).with_context(|| format!("writing {}", path.display()))?;
            if json_out {
                print_json(out, &report)?;
            } else {
                writeln!(out, "model written to {}", path.display())?;
                write!(out, "{}", render_model_table(&[&report]))?;
            }
        }
        Command::Predict { model, text, features } => {
            let m = EnsembleModel::from_json(&std::fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?)?;
            m.validate()?;
            let fv = match (features, text) {
                (Some(f), _) => parse_features(&f)?,
                (None, Some(t)) => {
                    let engine = Engine::with_parts(cfg.clone(), cfg.provider()?, Store::default())?;
                    let inf = infer_traits(engine.provider.as_ref(), &t, &[], &engine.policy())?;
                    FeatureVector::from_levels(&inf.levels)
                }
                (None, None) => bail!("one of --features or --text is required"),
            };
            let pred = m.predict(&fv);
            if json_out {
                print_json(out, &json!({ "features": fv.0, "levels": pred }))?;
            } else {
                writeln!(out, "{}", levels_line(&serde_json::to_value(pred)?))?;
            }
        }
        Command::Eval { dataset, scale, model } => {
            let rows = pipeline::read_students_file(&dataset)?;
            let engine = Engine::with_parts(cfg.clone(), cfg.provider()?, Store::default())?;
            let name = dataset_name(&dataset);
            let report = match model {
                EvalModel::ZeroShot => pipeline::evaluate_zero_shot(&engine, &rows, &name, scale.unwrap_or(cfg.scale))?,
                EvalModel::Mlp => {
                    if scale.is_some_and(|s| s != Scale::Binary) {
                        bail!("the MLP is trained on binary labels only");
                    }
                    pipeline::evaluate_mlp(&engine, &rows, &name, &EnsembleConfig::default())?.1
                }
            };
            if json_out {
                out.write_all(report.to_json().as_bytes())?;
                writeln!(out)?;
            } else {
                write!(out, "{}", render_model_table(&[&report]))?;
                for f in &report.failures {
                    writeln!(out, "failed: {} ({})", f.student_id, f.error)?;
                }
            }
        }
        Command::CompareScales { dataset } => {
            let rows = pipeline::read_students_file(&dataset)?;
            let engine = Engine::with_parts(cfg.clone(), cfg.provider()?, Store::default())?;
            let cmp = pipeline::evaluate_scales(&engine, &rows, &dataset_name(&dataset))?;
            if json_out {
                print_json(out, &cmp)?;
            } else {
                write!(out, "{}", render_scale_comparison(&cmp))?;
            }
        }
        Command::Match { student, k, dataset } => {
            let k = k.unwrap_or(cfg.matching.top_k);
            let engine = match &dataset {
                Some(d) => engine_from_dataset(cfg, d)?,
                None => Engine::open(cfg)?,
            };
            let view = engine.matches_view(&student, k)?;
            if json_out {
                print_json(out, &view)?;
            } else {
                if view.matches.is_empty() {
                    writeln!(out, "no matches for {student}")?;
                }
                for (i, m) in view.matches.iter().enumerate() {
                    let shared = if m.shared_interests.is_empty() { "-".to_string() } else { m.shared_interests.join(", ") };
                    writeln!(out, "{}. {} score {:.4} shared: {shared}", i + 1, m.student_id, m.score)?;
                    if let persona_core::presentation::SharedTraits::Shared(t) = &m.shared_traits {
                        writeln!(out, "   {t}")?;
                    }
                }
            }
        }
        Command::GenCohort { n, out: path, stats } => {
            if stats {
                let s = pipeline::cohort_stats(n, cfg.seed)?;
                if json_out {
                    print_json(out, &s)?;
                } else {
                    write!(out, "{}", s.render_table())?;
                }
            } else {
                let cohort = generate_cohort(
                    n,
                    &DistributionSpec::default(),
                    &ScoringKey::bfi44(),
                    &mut stream_rng(cfg.seed, streams::COHORT),
                )?;
                let rows: Vec<persona_core::dataset::DatasetRow> = cohort.iter().map(Into::into).collect();
                match path {
                    Some(p) => {
                        let f = std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                        persona_core::dataset::write_jsonl(std::io::BufWriter::new(f), &rows)?;
                        writeln!(out, "wrote {n} students to {}", p.display())?;
                    }
                    None => persona_core::dataset::write_jsonl(&mut *out, &rows)?,
                }
            }
        }
        Command::Serve { bind } => {
            let mut cfg = cfg;
            if let Some(b) = bind {
                cfg.service.bind = b;
            }
            crate::service::serve(Engine::open(cfg)?)?;
        }
        Command::Ingest { dataset } => {
            if cfg.paths.snapshot.is_none() {
                bail!("ingest needs `paths.snapshot` in the config");
            }
            let rows = pipeline::read_students_file(&dataset)?;
            let mut engine = Engine::open(cfg)?;
            let recs = engine.ingest_all(&rows)?;
            let retry: Vec<&str> = recs.iter().filter(|r| r.needs_retry).map(|r| r.profile.student_id.as_str()).collect();
            if json_out {
                print_json(out, &json!({ "ingested": recs.len(), "needs_retry": retry }))?;
            } else {
                writeln!(out, "ingested {} students, {} flagged for retry", recs.len(), retry.len())?;
            }
        }
        Command::Render { student, dataset } => {
            let engine = match &dataset {
                Some(d) => engine_from_dataset(cfg, d)?,
                None => Engine::open(cfg)?,
            };
            let view = engine.traits_view(&student)?;
            if json_out {
                print_json(out, &view)?;
            } else {
                match &view.summary {
                    Some(s) => writeln!(out, "{s}")?,
                    None => writeln!(out, "no traits detected for {student} yet")?,
                }
            }
        }
        Command::Pipeline { n, k, correlation, out: path } => {
            let report = pipeline::run_pipeline(n, cfg.seed, correlation.unwrap_or(cfg.provider.mock_correlation), k)?;
            let text = report.to_json();
            match path {
                Some(p) => std::fs::write(&p, &text).with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(text.as_bytes())?,
            }
        }
    }
    Ok(())
}

fn levels_line(levels: &serde_json::Value) -> String {
    Trait::ALL
        .iter()
        .map(|t| format!("{}={}", t.letter(), levels[t.name()].as_str().unwrap_or("?")))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `10110` in O, C, E, A, N order; 1 is high.
fn parse_features(s: &str) -> anyhow::Result<FeatureVector> {
    let bits: Vec<TraitLevel> = s
        .trim()
        .chars()
        .map(|c| match c {
            '1' => Ok(TraitLevel::High),
            '0' => Ok(TraitLevel::Low),
            _ => bail!("features must be five 0/1 digits"),
        })
        .collect::<anyhow::Result<_>>()?;
    let arr: [TraitLevel; 5] = bits.try_into().map_err(|_| anyhow::anyhow!("features must be five 0/1 digits"))?;
    Ok(FeatureVector::from_levels(&TraitLevels::new(arr).expect("binary")))
}
