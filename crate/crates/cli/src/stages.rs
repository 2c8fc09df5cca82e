//! One function per pipeline stage. Each reads its inputs from disk, writes
//! its outputs and returns a summary for the caller to print.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbasic_core::cascade::{
    activation_sequence, generate_instances, read_instances, reconstruct_cascade, write_instances,
    ActivationEvent, CandidateCounts, SpreadingCascade,
};
use tbasic_core::corpus::{self, build_profiles, ProfileSet, SocialGraph, TweetRecord};
use tbasic_core::engine::{predict, write_prediction, SimulationConfig, SimulationResult};
use tbasic_core::eval::{compare_with_baseline, Report};
use tbasic_core::features::{
    activity, extract, read_feature_matrix, write_feature_matrix, KeywordMode, FEATURE_NAMES,
};
use tbasic_core::learn::{
    accuracy, calibrate_sigma, cross_validate, normalized_weights, train as fit, DiffusionModel,
    SigmaFit, TrainOptions,
};
use tbasic_core::par::Execution;
use tbasic_core::time::{Period, SECONDS_PER_DAY};
use tbasic_core::topics::{cooccurring_terms, rank_terms, Topic};

use crate::config::{SimulationOptions, TermOptions};
use crate::failure::{require, Failure, InStage, Outcome};

pub const CASCADE_SUFFIX: &str = ".cascade.json";
pub const SEQUENCE_SUFFIX: &str = ".sequence.csv";
pub const INSTANCES_FILE: &str = "instances.csv";
pub const COUNTS_FILE: &str = "counts.json";

pub fn load_graph(path: &Path) -> Outcome<SocialGraph> {
    require(path)?;
    Ok(corpus::load_follow_edges(path).in_stage("load")?.graph)
}

pub fn load_tweets(path: &Path, period: Period) -> Outcome<Vec<TweetRecord>> {
    require(path)?;
    corpus::load_tweets(path, period).in_stage("load")
}

/// Reads the topic file and checks that every id can name a file.
pub fn load_topics(path: &Path) -> Outcome<Vec<Topic>> {
    require(path)?;
    let topics = tbasic_core::topics::load_topics(path).in_stage("load")?;
    let mut seen = std::collections::BTreeSet::new();
    for t in &topics {
        let ok = !t.id.is_empty()
            && !t.id.starts_with('.')
            && t.id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !ok {
            return Err(Failure::input(format!(
                "{}: topic id {:?} must use only letters, digits, '-', '_' and '.'",
                path.display(),
                t.id
            )));
        }
        if !seen.insert(t.id.as_str()) {
            return Err(Failure::input(format!(
                "{}: duplicate topic id {:?}",
                path.display(),
                t.id
            )));
        }
    }
    Ok(topics)
}

pub fn load_profiles(path: &Path) -> Outcome<ProfileSet> {
    require(path)?;
    ProfileSet::load(path).in_stage("load")
}

pub fn load_model(path: &Path) -> Outcome<DiffusionModel> {
    require(path)?;
    DiffusionModel::load(path).in_stage("load")
}

fn io_err(stage: &str, path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::stage(stage, format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(stage: &str, path: &Path, value: &T) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(stage, path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(stage, path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    require(path)?;
    let text =
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Removes and recreates `dir` so no stale artifacts survive a rerun.
pub fn fresh_dir(stage: &str, dir: &Path) -> Outcome<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| io_err(stage, dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| io_err(stage, dir, e))
}

/// Files in `dir` ending in `suffix`, sorted by name.
pub fn files_with_suffix(dir: &Path, suffix: &str) -> Outcome<Vec<PathBuf>> {
    require(dir)?;
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(suffix))
        })
        .collect();
    out.sort();
    Ok(out)
}

// ---- profiles -------------------------------------------------------------

pub fn profiles(
    tweets: &Path,
    edges: &Path,
    period: Period,
    out: &Path,
    exec: Execution,
) -> Outcome<usize> {
    let graph = load_graph(edges)?;
    let tweets = load_tweets(tweets, period)?;
    let set = build_profiles(&tweets, &graph, period, exec);
    set.save(out).in_stage("profiles")?;
    Ok(set.len())
}

// ---- terms ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub rank: usize,
    pub term: String,
    pub score: f64,
    pub total: u64,
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    /// `term:count` pairs separated by spaces.
    pub cooccurring: String,
}

pub fn term_table(
    tweets: &[TweetRecord],
    period: Period,
    opts: &TermOptions,
    exec: Execution,
) -> Outcome<Vec<TermRow>> {
    let ranked = rank_terms(
        tweets,
        period,
        opts.top,
        opts.min_total_count,
        opts.bin_hours,
        exec,
    )
    .in_stage("topics")?;
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let co = if opts.cooccur == 0 {
                String::new()
            } else {
                cooccurring_terms(tweets, &t.term, period, opts.cooccur)
                    .into_iter()
                    .map(|(w, c)| format!("{w}:{c}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            TermRow {
                rank: i + 1,
                term: t.term,
                score: t.score,
                total: t.total,
                min: t.stats.min,
                max: t.stats.max,
                avg: t.stats.avg,
                cooccurring: co,
            }
        })
        .collect())
}

pub fn write_csv<T: Serialize>(stage: &str, out: impl Write, rows: &[T]) -> Outcome<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Failure::stage(stage, e))?;
    }
    w.flush().map_err(|e| Failure::stage(stage, e))
}

pub fn create(stage: &str, path: &Path) -> Outcome<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(
        fs::File::create(path).map_err(|e| io_err(stage, path, e))?,
    ))
}

// ---- cascades -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeStats {
    pub topic_id: String,
    pub activations: usize,
    pub roots: usize,
    pub edges: usize,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSummary {
    pub topics: Vec<CascadeStats>,
    pub candidates: CandidateCounts,
    pub instances: usize,
}

pub fn write_sequence(stage: &str, path: &Path, seq: &[ActivationEvent]) -> Outcome<()> {
    let mut w = create(stage, path)?;
    let mut body = String::from("user_id,epoch\n");
    for e in seq {
        body.push_str(&format!("{},{}\n", e.user_id, e.time));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(stage, path, e))
}

pub fn read_sequence(path: &Path) -> Outcome<Vec<ActivationEvent>> {
    require(path)?;
    let bad =
        |line: usize, why: String| Failure::input(format!("{}:{line}: {why}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(i + 2, e.to_string()))?;
        let (Some(user), Some(t)) = (rec.get(0), rec.get(1)) else {
            return Err(bad(i + 2, "expected `user_id,epoch`".into()));
        };
        let time = t
            .trim()
            .parse()
            .map_err(|e| bad(i + 2, format!("epoch: {e}")))?;
        out.push(ActivationEvent {
            user_id: user.trim().to_lowercase(),
            time,
        });
    }
    out.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.user_id.cmp(&b.user_id)));
    Ok(out)
}

/// Reconstructs every topic's cascade from `tweets` and writes, under
/// `out_dir`, one cascade and one activation sequence per topic, the pooled
/// labelled instances and the pre-balancing class counts.
pub fn cascades(
    topics: &[Topic],
    tweets: &[TweetRecord],
    graph: &SocialGraph,
    balance_seed: u64,
    out_dir: &Path,
) -> Outcome<CascadeSummary> {
    const STAGE: &str = "cascades";
    fs::create_dir_all(out_dir).map_err(|e| io_err(STAGE, out_dir, e))?;
    let mut all = Vec::new();
    let mut candidates = CandidateCounts::default();
    let mut stats = Vec::new();
    for (i, topic) in topics.iter().enumerate() {
        let seq = activation_sequence(topic, tweets);
        let cascade = reconstruct_cascade(&topic.id, &seq, graph);
        let instances = generate_instances(
            &cascade,
            &seq,
            graph,
            topic,
            balance_seed.wrapping_add(i as u64),
        );
        candidates.add(CandidateCounts::of(&cascade, &seq, graph));
        write_sequence(
            STAGE,
            &out_dir.join(format!("{}{SEQUENCE_SUFFIX}", topic.id)),
            &seq,
        )?;
        cascade
            .save(out_dir.join(format!("{}{CASCADE_SUFFIX}", topic.id)))
            .in_stage(STAGE)?;
        stats.push(CascadeStats {
            topic_id: topic.id.clone(),
            activations: seq.len(),
            roots: cascade.roots.len(),
            edges: cascade.edges.len(),
            instances: instances.len(),
        });
        all.extend(instances);
    }
    write_instances(out_dir.join(INSTANCES_FILE), &all).in_stage(STAGE)?;
    write_json(STAGE, &out_dir.join(COUNTS_FILE), &candidates)?;
    Ok(CascadeSummary {
        topics: stats,
        candidates,
        instances: all.len(),
    })
}

// ---- features -------------------------------------------------------------

pub fn features(
    instances: &Path,
    profiles: &Path,
    topics: &Path,
    mode: KeywordMode,
    out: &Path,
    exec: Execution,
) -> Outcome<usize> {
    require(instances)?;
    let instances = read_instances(instances).in_stage("features")?;
    let profiles = load_profiles(profiles)?;
    let topics = load_topics(topics)?;
    let rows = extract(&instances, &profiles, &topics, mode, exec).in_stage("features")?;
    write_feature_matrix(out, &rows).in_stage("features")?;
    Ok(rows.len())
}

// ---- train ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub feature: String,
    pub weight: f64,
    /// Weight over the largest absolute weight.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub instances: usize,
    pub diffusion: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub log_posterior: f64,
    /// Accuracy of the fitted model on its own (balanced) training set.
    pub fit_accuracy: f64,
    /// Mean held-out accuracy over stratified folds, before any prior
    /// correction.
    pub cv_accuracy: Option<f64>,
    pub folds: usize,
    /// Intercept shift applied for the candidate class ratio.
    pub prior_shift: Option<f64>,
    pub w0: f64,
    pub weights: Vec<WeightRow>,
}

pub fn train(
    features: &Path,
    opts: &TrainOptions,
    folds: usize,
    prior_counts: Option<&Path>,
    model_out: &Path,
) -> Outcome<TrainSummary> {
    const STAGE: &str = "train";
    require(features)?;
    let counts: Option<CandidateCounts> = prior_counts.map(read_json).transpose()?;
    let examples = read_feature_matrix(features).in_stage(STAGE)?;
    let (mut model, report) = fit(&examples, opts).in_stage(STAGE)?;
    let fit_accuracy = accuracy(&model, &examples);
    let cv_accuracy = if folds >= 2 {
        Some(cross_validate(&examples, folds, opts).in_stage(STAGE)?)
    } else {
        None
    };
    let prior_shift = match counts {
        Some(c) => {
            let shift = c.log_odds().map_err(|e| Failure::stage(STAGE, e))?;
            model.correct_prior(&c).in_stage(STAGE)?;
            Some(shift)
        }
        None => None,
    };
    model.trained_on = features
        .file_name()
        .map(|n| n.to_string_lossy().into_owned());
    model.save(model_out).in_stage(STAGE)?;
    let norm = normalized_weights(&model);
    Ok(TrainSummary {
        instances: examples.len(),
        diffusion: examples.iter().filter(|e| e.label.is_diffusion()).count(),
        lambda: opts.lambda,
        epochs: report.epochs,
        converged: report.converged,
        gradient_norm: report.gradient_norm,
        log_posterior: report.log_posterior,
        fit_accuracy,
        cv_accuracy,
        folds,
        prior_shift,
        w0: model.w0,
        weights: FEATURE_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| WeightRow {
                feature: name.to_string(),
                weight: model.w[k],
                normalized: norm[k],
            })
            .collect(),
    })
}

// ---- calibrate ------------------------------------------------------------

/// Fits σ on the diffusion edges of every cascade in `cascades` and writes
/// the model with that σ to `model_out`.
pub fn calibrate(
    cascades: &Path,
    profiles: &Path,
    model: &Path,
    model_out: &Path,
    exec: Execution,
) -> Outcome<SigmaFit> {
    const STAGE: &str = "calibrate";
    let mut model = load_model(model)?;
    let profiles = load_profiles(profiles)?;
    let mut obs = Vec::new();
    for path in files_with_suffix(cascades, CASCADE_SUFFIX)? {
        let c = SpreadingCascade::load(&path).in_stage(STAGE)?;
        for (dst, delay) in c.edge_delays() {
            obs.push((delay, activity(&profiles.get_or_empty(dst))));
        }
    }
    let fit = calibrate_sigma(&obs, exec).in_stage(STAGE)?;
    model.sigma = fit.sigma;
    model.save(model_out).in_stage(STAGE)?;
    Ok(fit)
}

// ---- simulate -------------------------------------------------------------

/// Predicts a topic's daily volume, seeding with the head of its observed
/// activation sequence.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    graph: &SocialGraph,
    profiles: &ProfileSet,
    model: &DiffusionModel,
    topic: &Topic,
    sequence: &[ActivationEvent],
    opts: &SimulationOptions,
    mode: KeywordMode,
    exec: Execution,
) -> Outcome<SimulationResult> {
    if sequence.is_empty() {
        return Err(Failure::stage(
            "simulate",
            format!("topic {} has no activations to seed from", topic.id),
        ));
    }
    let mut cfg = SimulationConfig {
        horizon_days: opts.days,
        runs: opts.runs,
        rng_seed: opts.rng_seed,
        eval_time: opts.eval_time,
        keep_traces: false,
        exec,
        ..Default::default()
    };
    cfg.seeds_from_sequence(sequence, opts.seeds);
    predict(graph, profiles, model, topic, mode, &cfg).in_stage("simulate")
}

pub fn save_prediction(path: &Path, result: &SimulationResult) -> Outcome<()> {
    write_prediction(path, result).in_stage("simulate")
}

/// Daily adoption counts over `days` days, counted from the first activation.
pub fn real_series(sequence: &[ActivationEvent], days: u32) -> Vec<f64> {
    let mut out = vec![0.0; days as usize];
    if let Some(first) = sequence.first() {
        for e in sequence {
            let d = ((e.time - first.time) / SECONDS_PER_DAY) as usize;
            if d < out.len() {
                out[d] += 1.0;
            }
        }
    }
    out
}

pub fn write_series(stage: &str, path: &Path, series: &[f64]) -> Outcome<()> {
    let mut body = String::from("day,volume\n");
    for (d, v) in series.iter().enumerate() {
        body.push_str(&format!("{},{v}\n", d + 1));
    }
    fs::write(path, body).map_err(|e| io_err(stage, path, e))
}

/// Reads one numeric column, by header name, from a CSV series file.
pub fn read_column(path: &Path, names: &[&str]) -> Outcome<Vec<f64>> {
    require(path)?;
    let bad = |why: String| Failure::input(format!("{}: {why}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = header
        .iter()
        .position(|h| names.contains(&h.trim()))
        .ok_or_else(|| bad(format!("no column named {}", names.join(" or "))))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let v: f64 = rec
            .get(col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        out.push(v);
    }
    Ok(out)
}

// ---- evaluate -------------------------------------------------------------

pub fn evaluate(pred: &Path, real: &Path) -> Outcome<Report> {
    let p = read_column(pred, &["predicted_volume", "volume"])?;
    let r = read_column(real, &["volume", "real_volume"])?;
    if p.len() != r.len() {
        return Err(Failure::input(format!(
            "{} has {} days but {} has {}",
            pred.display(),
            p.len(),
            real.display(),
            r.len()
        )));
    }
    compare_with_baseline(&p, &r).in_stage("evaluate")
}
