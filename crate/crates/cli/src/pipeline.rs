//! End-to-end run: profiles, topics, cascades, features, train, calibrate,
//! simulate, evaluate. Every stage is skipped when its content-hash key
//! matches the previous run.
//!
//! Layout of the output directory:
//!
//! ```text
//! profiles.json              learning-period profiles
//! terms.csv                  ranked terms of the test period
//! cascades/                  per-topic cascades and sequences, instances.csv, counts.json
//! features.csv
//! model.json                 trained model (σ at its default)
//! train_report.json
//! calibrated_model.json      model with fitted σ
//! sigma.json
//! predictions/<topic>.csv
//! real/<topic>.csv
//! report.json
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbasic_core::eval::Report;
use tbasic_core::learn::TrainOptions;
use tbasic_core::par::Execution;
use tbasic_core::topics::Topic;

use crate::cache::{Cache, KeyBuilder};
use crate::config::PipelineConfig;
use crate::failure::{require, Failure, Outcome};
use crate::stages::{self, COUNTS_FILE, INSTANCES_FILE, SEQUENCE_SUFFIX};

pub const STAGES: [&str; 8] = [
    "profiles",
    "topics",
    "cascades",
    "features",
    "train",
    "calibrate",
    "simulate",
    "evaluate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub topic_id: String,
    pub real_total: f64,
    pub predicted_total: f64,
    /// Present when the topic could be scored.
    pub report: Option<Report>,
    /// Why the topic could not be scored.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub topics: Vec<TopicReport>,
    pub scored: usize,
    /// Topics with a strictly positive overall gain over the 1-time-lag
    /// predictor.
    pub wins: usize,
    pub mean_overall_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRun {
    pub name: &'static str,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub stages: Vec<StageRun>,
    pub summary: EvaluationSummary,
}

pub struct Paths {
    pub profiles: PathBuf,
    pub terms: PathBuf,
    pub cascades: PathBuf,
    pub features: PathBuf,
    pub model: PathBuf,
    pub train_report: PathBuf,
    pub calibrated: PathBuf,
    pub sigma: PathBuf,
    pub predictions: PathBuf,
    pub real: PathBuf,
    pub report: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Self {
        Paths {
            profiles: out.join("profiles.json"),
            terms: out.join("terms.csv"),
            cascades: out.join("cascades"),
            features: out.join("features.csv"),
            model: out.join("model.json"),
            train_report: out.join("train_report.json"),
            calibrated: out.join("calibrated_model.json"),
            sigma: out.join("sigma.json"),
            predictions: out.join("predictions"),
            real: out.join("real"),
            report: out.join("report.json"),
        }
    }
}

struct Runner {
    cache: Cache,
    runs: Vec<StageRun>,
}

impl Runner {
    fn stage(
        &mut self,
        name: &'static str,
        key: KeyBuilder,
        outputs: &[PathBuf],
        body: impl FnOnce() -> Outcome<()>,
    ) -> Outcome<()> {
        let key = key.finish();
        if self.cache.is_fresh(name, &key, outputs) {
            log::info!("{name}: unchanged, skipped");
            self.runs.push(StageRun { name, cached: true });
            return Ok(());
        }
        log::info!("{name}: running");
        self.cache.invalidate(name)?;
        body().map_err(|e| match e {
            Failure::Stage { source, .. } => Failure::Stage {
                stage: name.to_owned(),
                source,
            },
            Failure::Input(e) => Failure::Input(e.context(format!("stage {name}"))),
        })?;
        self.cache.record(name, &key)?;
        self.runs.push(StageRun {
            name,
            cached: false,
        });
        Ok(())
    }
}

fn selected<'a>(topics: &'a [Topic], wanted: &Option<Vec<String>>) -> Outcome<Vec<&'a Topic>> {
    match wanted {
        None => Ok(topics.iter().collect()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                topics.iter().find(|t| &t.id == id).ok_or_else(|| {
                    Failure::input(format!("evaluation topic {id:?} is not in the topic file"))
                })
            })
            .collect(),
    }
}

/// Runs every stage in order under `cfg`, reusing cached outputs.
pub fn run_pipeline(cfg: &PipelineConfig, exec: Execution) -> Outcome<PipelineRun> {
    cfg.validate()?;
    for p in [&cfg.tweets, &cfg.edges, &cfg.topics] {
        require(p)?;
    }
    let (learning, test) = cfg.periods()?;
    let topics = stages::load_topics(&cfg.topics)?;
    let chosen = selected(&topics, &cfg.evaluation.topics)?;
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
    let paths = Paths::new(out);
    let mut r = Runner {
        cache: Cache::new(out),
        runs: Vec::new(),
    };
    let training = &cfg.training;

    r.stage(
        "profiles",
        KeyBuilder::new("profiles")
            .param("period", &learning)
            .file("tweets", &cfg.tweets)?
            .file("edges", &cfg.edges)?,
        std::slice::from_ref(&paths.profiles),
        || stages::profiles(&cfg.tweets, &cfg.edges, learning, &paths.profiles, exec).map(|_| ()),
    )?;

    r.stage(
        "topics",
        KeyBuilder::new("topics")
            .param("period", &test)
            .param("terms", &cfg.terms)
            .file("tweets", &cfg.tweets)?,
        std::slice::from_ref(&paths.terms),
        || {
            let tweets = stages::load_tweets(&cfg.tweets, test)?;
            let rows = stages::term_table(&tweets, test, &cfg.terms, exec)?;
            stages::write_csv("topics", stages::create("topics", &paths.terms)?, &rows)
        },
    )?;

    r.stage(
        "cascades",
        KeyBuilder::new("cascades")
            .param("period", &test)
            .param("balance_seed", &training.balance_seed)
            .file("tweets", &cfg.tweets)?
            .file("edges", &cfg.edges)?
            .file("topics", &cfg.topics)?,
        &[
            paths.cascades.join(INSTANCES_FILE),
            paths.cascades.join(COUNTS_FILE),
        ],
        || {
            stages::fresh_dir("cascades", &paths.cascades)?;
            let graph = stages::load_graph(&cfg.edges)?;
            let tweets = stages::load_tweets(&cfg.tweets, test)?;
            let s = stages::cascades(
                &topics,
                &tweets,
                &graph,
                training.balance_seed,
                &paths.cascades,
            )?;
            log::info!(
                "cascades: {} instances, {} diffusion / {} non-diffusion candidates",
                s.instances,
                s.candidates.diffusion,
                s.candidates.non_diffusion
            );
            Ok(())
        },
    )?;

    r.stage(
        "features",
        KeyBuilder::new("features")
            .param("keyword_mode", &training.keyword_mode)
            .file("instances", &paths.cascades.join(INSTANCES_FILE))?
            .file("profiles", &paths.profiles)?
            .file("topics", &cfg.topics)?,
        std::slice::from_ref(&paths.features),
        || {
            stages::features(
                &paths.cascades.join(INSTANCES_FILE),
                &paths.profiles,
                &cfg.topics,
                training.keyword_mode,
                &paths.features,
                exec,
            )
            .map(|_| ())
        },
    )?;

    let counts = paths.cascades.join(COUNTS_FILE);
    let mut key = KeyBuilder::new("train")
        .param("training", training)
        .file("features", &paths.features)?;
    if training.prior_correction {
        key = key.file("counts", &counts)?;
    }
    r.stage(
        "train",
        key,
        &[paths.model.clone(), paths.train_report.clone()],
        || {
            let opts = TrainOptions {
                lambda: training.lambda,
                seed: training.seed,
                exec,
                ..Default::default()
            };
            let prior = training.prior_correction.then_some(counts.as_path());
            let summary =
                stages::train(&paths.features, &opts, training.folds, prior, &paths.model)?;
            if let Some(cv) = summary.cv_accuracy {
                log::info!("train: {}-fold accuracy {cv:.4}", training.folds);
            }
            stages::write_json("train", &paths.train_report, &summary)
        },
    )?;

    r.stage(
        "calibrate",
        KeyBuilder::new("calibrate")
            .files(&paths.cascades, stages::CASCADE_SUFFIX)?
            .file("profiles", &paths.profiles)?
            .file("model", &paths.model)?,
        &[paths.calibrated.clone(), paths.sigma.clone()],
        || {
            let fit = stages::calibrate(
                &paths.cascades,
                &paths.profiles,
                &paths.model,
                &paths.calibrated,
                exec,
            )?;
            log::info!("calibrate: sigma {:.3} h from {} edges", fit.sigma, fit.n);
            stages::write_json("calibrate", &paths.sigma, &fit)
        },
    )?;

    let ids: Vec<&str> = chosen.iter().map(|t| t.id.as_str()).collect();
    let pred_path = |id: &str| paths.predictions.join(format!("{id}.csv"));
    let real_path = |id: &str| paths.real.join(format!("{id}.csv"));
    let outputs: Vec<PathBuf> = ids
        .iter()
        .flat_map(|id| [pred_path(id), real_path(id)])
        .collect();
    r.stage(
        "simulate",
        KeyBuilder::new("simulate")
            .param("simulation", &cfg.simulation)
            .param("keyword_mode", &training.keyword_mode)
            .param("topics", &ids)
            .file("model", &paths.calibrated)?
            .file("edges", &cfg.edges)?
            .file("profiles", &paths.profiles)?
            .file("topics", &cfg.topics)?
            .files(&paths.cascades, SEQUENCE_SUFFIX)?,
        &outputs,
        || {
            stages::fresh_dir("simulate", &paths.predictions)?;
            stages::fresh_dir("simulate", &paths.real)?;
            let graph = stages::load_graph(&cfg.edges)?;
            let profiles = stages::load_profiles(&paths.profiles)?;
            let model = stages::load_model(&paths.calibrated)?;
            for topic in &chosen {
                let seq = stages::read_sequence(
                    &paths
                        .cascades
                        .join(format!("{}{SEQUENCE_SUFFIX}", topic.id)),
                )?;
                let real = stages::real_series(&seq, cfg.simulation.days);
                stages::write_series("simulate", &real_path(&topic.id), &real)?;
                let result = stages::simulate(
                    &graph,
                    &profiles,
                    &model,
                    topic,
                    &seq,
                    &cfg.simulation,
                    training.keyword_mode,
                    exec,
                )?;
                stages::save_prediction(&pred_path(&topic.id), &result)?;
            }
            Ok(())
        },
    )?;

    let mut key = KeyBuilder::new("evaluate");
    for id in &ids {
        key = key
            .file(&format!("pred/{id}"), &pred_path(id))?
            .file(&format!("real/{id}"), &real_path(id))?;
    }
    r.stage("evaluate", key, std::slice::from_ref(&paths.report), || {
        let summary = evaluate_all(&ids, &pred_path, &real_path)?;
        stages::write_json("evaluate", &paths.report, &summary)
    })?;

    let summary: EvaluationSummary = stages::read_json(&paths.report)?;
    Ok(PipelineRun {
        stages: r.runs,
        summary,
    })
}

fn evaluate_all(
    ids: &[&str],
    pred_path: &dyn Fn(&str) -> PathBuf,
    real_path: &dyn Fn(&str) -> PathBuf,
) -> Outcome<EvaluationSummary> {
    let mut reports = Vec::new();
    for id in ids {
        let (p, rp) = (pred_path(id), real_path(id));
        let pred = stages::read_column(&p, &["predicted_volume"])?;
        let real = stages::read_column(&rp, &["volume"])?;
        let (report, skipped) = match stages::evaluate(&p, &rp) {
            Ok(rep) => (Some(rep), None),
            Err(Failure::Stage { source, .. }) => {
                log::warn!("evaluate: topic {id} not scored: {source}");
                (None, Some(source.to_string()))
            }
            Err(e) => return Err(e),
        };
        reports.push(TopicReport {
            topic_id: id.to_string(),
            real_total: real.iter().sum(),
            predicted_total: pred.iter().sum(),
            report,
            skipped,
        });
    }
    let gains: Vec<f64> = reports
        .iter()
        .filter_map(|t| t.report.map(|r| r.overall_gain))
        .collect();
    if gains.is_empty() {
        return Err(Failure::stage("evaluate", "no topic could be scored"));
    }
    Ok(EvaluationSummary {
        scored: gains.len(),
        wins: gains.iter().filter(|&&g| g > 0.0).count(),
        mean_overall_gain: gains.iter().sum::<f64>() / gains.len() as f64,
        topics: reports,
    })
}
