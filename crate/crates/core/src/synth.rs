//! Synthetic corpora with a planted diffusion model.
//!
//! A power-law follower graph is drawn first. Each user gets an activity
//! level, a diurnal template, a mention propensity and topic interests, from
//! which a learning period of background tweets is emitted. The planted
//! model is then run on the learning-period profiles to produce one cascade
//! per planted topic in the test period, on top of background chatter that
//! never contains a full topic keyword set.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::cascade::{ActivationEvent, CascadeEdge, SpreadingCascade};
use crate::corpus::{build_profiles, write_follow_edges, write_tweets, SocialGraph, TweetRecord};
use crate::engine::{simulate_once, LearnedDiffusion, SeedUser, SimulationConfig, Topology};
use crate::features::{KeywordMode, N_FEATURES};
use crate::learn::DiffusionModel;
use crate::par::Execution;
use crate::time::{hour_of_day, Period, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::topics::{Topic, Window};
use crate::{Error, Result};

/// 2009-11-01T00:00:00Z
pub const NOV_2009: i64 = 1_257_033_600;
/// 2009-12-01T00:00:00Z
pub const DEC_2009: i64 = 1_259_625_600;

const FILLER: &[&str] = &[
    "the",
    "a",
    "today",
    "just",
    "really",
    "good",
    "new",
    "day",
    "time",
    "love",
    "people",
    "work",
    "home",
    "night",
    "morning",
    "great",
    "think",
    "know",
    "want",
    "going",
    "back",
    "still",
    "make",
    "need",
    "look",
    "right",
    "watch",
    "music",
    "game",
    "food",
    "coffee",
    "weekend",
    "friends",
    "happy",
    "tired",
    "lol",
    "twitter",
    "bit.ly",
    "twitpic.com",
    "photo",
    "video",
    "read",
    "blog",
    "post",
    "news",
    "city",
    "weather",
    "cold",
    "rain",
    "team",
    "win",
    "school",
    "office",
    "movie",
    "show",
    "dinner",
    "lunch",
    "sleep",
    "wow",
];

/// Bin weights over the six 4-hour slots of a day.
const DIURNAL_TEMPLATES: [[f64; 6]; 6] = [
    [0.80, 0.04, 0.04, 0.04, 0.04, 0.04],
    [0.04, 0.80, 0.04, 0.04, 0.04, 0.04],
    [0.04, 0.04, 0.80, 0.04, 0.04, 0.04],
    [0.04, 0.04, 0.04, 0.80, 0.04, 0.04],
    [0.04, 0.04, 0.04, 0.04, 0.80, 0.04],
    [0.04, 0.04, 0.04, 0.04, 0.04, 0.80],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedTopic {
    pub id: String,
    pub keywords: Vec<String>,
    /// Number of users injecting the topic.
    pub seed_count: usize,
    /// Explicit seed users; drawn at random when empty.
    pub seed_users: Vec<String>,
    /// Hours after the test period start at which the first seed fires.
    pub start_hour: f64,
    /// Seeds fire uniformly within this many hours of the first one.
    pub seed_spread_hours: f64,
    pub horizon_days: u32,
}

impl Default for PlantedTopic {
    fn default() -> Self {
        PlantedTopic {
            id: "topic".into(),
            keywords: vec!["iphone".into(), "release".into()],
            seed_count: 20,
            seed_users: Vec::new(),
            start_hour: 24.0,
            seed_spread_hours: 24.0,
            horizon_days: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    /// Exponent of the out-degree (followee count) power law.
    pub exponent: f64,
    pub min_degree: usize,
    pub max_degree: usize,
    /// Mean background tweets per user per day.
    pub background_rate: f64,
    /// Log-scale spread of per-user activity around `background_rate`.
    pub activity_spread: f64,
    /// Upper bound of the per-user share of directed tweets.
    pub max_mention_share: f64,
    /// Fraction of users with the engaged trait.
    pub engaged_share: f64,
    /// Probability of being chatty, i.e. having a directed share in the
    /// upper half of the range rather than below a tenth of it, as
    /// `[casual, engaged]`.
    pub chatty: [f64; 2],
    /// Probability of being interested in a given topic, `[casual, engaged]`.
    pub topic_interest: [f64; 2],
    /// Activity multiplier of engaged users.
    pub engaged_activity: f64,
    pub learning_start: i64,
    pub learning_days: u32,
    pub test_start: i64,
    pub test_days: u32,
    pub planted: DiffusionModel,
    pub topics: Vec<PlantedTopic>,
    pub rng_seed: u64,
}

/// Planted weights used by default: a handful of features with |w| in
/// {1, 2}, the rest 0.
pub fn default_planted_model() -> DiffusionModel {
    use crate::features::idx::*;
    let mut w = [0.0; N_FEATURES];
    w[I_DST] = -2.0;
    w[HK_DST] = -2.0;
    w[HM_DST_SRC] = -2.0;
    w[HM_SRC_DST] = -2.0;
    w[DTR_DST] = 2.0;
    w[A_DST] = -1.0;
    DiffusionModel::new(5.5, w, 7.0)
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_users: 1000,
            exponent: 2.3,
            min_degree: 5,
            max_degree: 200,
            background_rate: 3.0,
            activity_spread: 0.8,
            max_mention_share: 0.8,
            engaged_share: 0.25,
            chatty: [0.3, 0.5],
            topic_interest: [0.05, 0.95],
            engaged_activity: 5.0,
            learning_start: NOV_2009,
            learning_days: 30,
            test_start: DEC_2009,
            test_days: 31,
            planted: default_planted_model(),
            topics: vec![PlantedTopic::default()],
            rng_seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn learning_period(&self) -> Period {
        Period {
            start: self.learning_start,
            end: self.learning_start + self.learning_days as i64 * SECONDS_PER_DAY,
        }
    }

    pub fn test_period(&self) -> Period {
        Period {
            start: self.test_start,
            end: self.test_start + self.test_days as i64 * SECONDS_PER_DAY,
        }
    }

    /// `n` topics with distinct keyword pairs, starting a day apart.
    pub fn with_topics(mut self, n: usize) -> Self {
        self.topics = (0..n)
            .map(|i| PlantedTopic {
                id: format!("topic{i:02}"),
                keywords: vec![format!("alpha{i:02}"), format!("beta{i:02}")],
                start_hour: 24.0 * (1 + i % 20) as f64,
                ..Default::default()
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_users < 2 {
            return bad("n_users must be at least 2".into());
        }
        if self.min_degree == 0 || self.min_degree > self.max_degree {
            return bad(format!(
                "degree range [{}, {}] is empty",
                self.min_degree, self.max_degree
            ));
        }
        if self.max_degree >= self.n_users {
            return bad(format!(
                "max_degree {} needs more than {} users",
                self.max_degree, self.n_users
            ));
        }
        if self.exponent.is_nan() || self.exponent <= 1.0 {
            return bad("power-law exponent must exceed 1".into());
        }
        if [
            self.background_rate,
            self.activity_spread,
            self.engaged_activity,
        ]
        .iter()
        .any(|x| x.is_nan() || *x < 0.0)
        {
            return bad("rates must be non-negative".into());
        }
        let shares = [
            self.max_mention_share,
            self.engaged_share,
            self.chatty[0],
            self.chatty[1],
            self.topic_interest[0],
            self.topic_interest[1],
        ];
        if shares.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return bad("shares must lie in [0, 1]".into());
        }
        if self.learning_period().overlaps(&self.test_period())
            || self.learning_start >= self.test_start
        {
            return bad("learning period must end before the test period".into());
        }
        self.planted.validate()?;
        for t in &self.topics {
            if t.keywords.is_empty() {
                return bad(format!("planted topic {:?} has no keywords", t.id));
            }
            if t.seed_count == 0 && t.seed_users.is_empty() {
                return bad(format!("planted topic {:?} has no seeds", t.id));
            }
            let horizon = 24.0 * t.horizon_days as f64;
            let end = t.start_hour + horizon;
            if t.start_hour < 0.0
                || end > 24.0 * self.test_days as f64
                || !(0.0..horizon).contains(&t.seed_spread_hours)
            {
                return bad(format!(
                    "planted topic {:?} does not fit the test period",
                    t.id
                ));
            }
        }
        Ok(())
    }

    /// Mean out-degree implied by the truncated power law.
    pub fn expected_mean_degree(&self) -> f64 {
        let w: Vec<f64> = (self.min_degree..=self.max_degree)
            .map(|k| (k as f64).powf(-self.exponent))
            .collect();
        let z: f64 = w.iter().sum();
        (self.min_degree..=self.max_degree)
            .zip(&w)
            .map(|(k, p)| k as f64 * p / z)
            .sum()
    }

    /// Passive density the degree law targets.
    pub fn target_density(&self) -> f64 {
        self.expected_mean_degree() / (self.n_users - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTruth {
    pub id: String,
    pub keywords: Vec<String>,
    pub window: Window,
    /// Epoch second of simulation time 0.
    pub origin: i64,
    pub seeds: Vec<SeedUser>,
    /// Who actually activated whom.
    pub edges: Vec<CascadeEdge>,
    pub activations: usize,
}

impl TopicTruth {
    /// The planted cascade over an observed activation sequence: every
    /// activation that is not the target of a planted edge is a root.
    pub fn cascade(&self, sequence: &[ActivationEvent]) -> SpreadingCascade {
        let targets: HashSet<&str> = self.edges.iter().map(|e| e.dst.as_str()).collect();
        SpreadingCascade {
            topic_id: self.id.clone(),
            roots: sequence
                .iter()
                .filter(|e| !targets.contains(e.user_id.as_str()))
                .cloned()
                .collect(),
            edges: self.edges.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub model: DiffusionModel,
    pub topics: Vec<TopicTruth>,
    pub target_density: f64,
    pub density: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub graph: SocialGraph,
    /// Sorted by time, then author.
    pub tweets: Vec<TweetRecord>,
    pub topics: Vec<Topic>,
    pub truth: Truth,
}

impl SynthCorpus {
    /// Writes `edges.tsv`, `tweets.txt`, `topics.json` and `truth.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_follow_edges(dir.join("edges.tsv"), &self.graph)?;
        write_tweets(dir.join("tweets.txt"), &self.tweets)?;
        write_json(dir.join("topics.json"), &self.topics)?;
        write_json(dir.join("truth.json"), &self.truth)
    }
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

struct Persona {
    engaged: bool,
    rate: f64,
    template: usize,
    mention_share: f64,
    interests: Vec<bool>,
}

fn user_names(n: usize) -> Vec<String> {
    let width = (n - 1).to_string().len();
    (0..n).map(|i| format!("u{i:0width$}")).collect()
}

fn filler(rng: &mut ChaCha8Rng, words: usize) -> Vec<&'static str> {
    (0..words)
        .map(|_| FILLER[rng.random_range(0..FILLER.len())])
        .collect()
}

/// Draws the corpus. Deterministic in `spec.rng_seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let names = user_names(spec.n_users);
    let n = spec.n_users;

    // heavy-tailed popularity decides whom people follow
    let popularity: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            u.powf(-1.0 / (spec.exponent - 1.0))
        })
        .collect();
    let degree_weights = WeightedIndex::new(
        (spec.min_degree..=spec.max_degree).map(|k| (k as f64).powf(-spec.exponent)),
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let mut pairs = Vec::new();
    let mut followees: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..n {
        let k = spec.min_degree + degree_weights.sample(&mut rng);
        let picks = rand::seq::index::sample_weighted(
            &mut rng,
            n - 1,
            |i| popularity[if i >= u { i + 1 } else { i }],
            k,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let mut chosen: Vec<usize> = picks
            .into_iter()
            .map(|i| if i >= u { i + 1 } else { i })
            .collect();
        chosen.sort_unstable();
        for &v in &chosen {
            pairs.push((names[u].as_str(), names[v].as_str()));
        }
        followees[u] = chosen;
    }
    let (graph, _) = SocialGraph::build(pairs, names.iter());
    let mut followers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, fs) in followees.iter().enumerate() {
        for &v in fs {
            followers[v].push(u);
        }
    }

    let activity = LogNormal::new(
        -spec.activity_spread * spec.activity_spread / 2.0,
        spec.activity_spread,
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let personas: Vec<Persona> = (0..n)
        .map(|_| {
            let engaged = rng.random_bool(spec.engaged_share);
            let e = engaged as usize;
            let boost = if engaged { spec.engaged_activity } else { 1.0 };
            Persona {
                engaged,
                rate: spec.background_rate * boost * activity.sample(&mut rng),
                template: rng.random_range(0..DIURNAL_TEMPLATES.len()),
                mention_share: if rng.random_bool(spec.chatty[e]) {
                    rng.random_range(spec.max_mention_share / 2.0..=spec.max_mention_share)
                } else {
                    rng.random_range(0.0..=spec.max_mention_share / 10.0)
                },
                interests: spec
                    .topics
                    .iter()
                    .map(|_| rng.random_bool(spec.topic_interest[e]))
                    .collect(),
            }
        })
        .collect();
    // engaged users mostly talk to engaged neighbours
    let contacts: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut all: Vec<usize> = followees[u].iter().chain(&followers[u]).copied().collect();
            all.sort_unstable();
            all.dedup();
            if personas[u].engaged {
                let close: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&v| personas[v].engaged)
                    .collect();
                if !close.is_empty() {
                    return close;
                }
            }
            all
        })
        .collect();
    let templates: Vec<WeightedIndex<f64>> = DIURNAL_TEMPLATES
        .iter()
        .map(|t| WeightedIndex::new(t.iter().copied()).expect("templates are valid"))
        .collect();

    let mut tweets = Vec::new();
    let emit =
        |rng: &mut ChaCha8Rng, tweets: &mut Vec<TweetRecord>, period: Period, learning: bool| {
            let days = period.span_seconds() / SECONDS_PER_DAY;
            for u in 0..n {
                let p = &personas[u];
                let lambda = p.rate * days as f64;
                let count = if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map(|d| d.sample(rng) as u64)
                        .unwrap_or(0)
                } else {
                    0
                };
                for _ in 0..count {
                    let day = rng.random_range(0..days);
                    let bin = templates[p.template].sample(rng) as i64;
                    let ts = period.start
                        + day * SECONDS_PER_DAY
                        + bin * 4 * SECONDS_PER_HOUR
                        + rng.random_range(0..4 * SECONDS_PER_HOUR);
                    let mut words: Vec<String> = Vec::new();
                    if rng.random_bool(p.mention_share) {
                        let local = if p.engaged { 0.95 } else { 0.5 };
                        let target = if !contacts[u].is_empty() && rng.random_bool(local) {
                            contacts[u][rng.random_range(0..contacts[u].len())]
                        } else {
                            let v = rng.random_range(0..n - 1);
                            if v >= u {
                                v + 1
                            } else {
                                v
                            }
                        };
                        if rng.random_bool(0.2) {
                            words.push("RT".into());
                        }
                        words.push(format!("@{}", names[target]));
                    }
                    let k = rng.random_range(3..8);
                    words.extend(filler(rng, k).into_iter().map(String::from));
                    for (ti, topic) in spec.topics.iter().enumerate() {
                        if learning && p.interests[ti] && rng.random_bool(0.1) {
                            words.extend(topic.keywords.iter().cloned());
                        } else if topic.keywords.len() > 1 && rng.random_bool(0.01) {
                            // a lone keyword never completes the topic
                            words.push(topic.keywords[0].clone());
                        }
                    }
                    tweets.push(TweetRecord::new(&names[u], ts, words.join(" ")));
                }
            }
        };
    emit(&mut rng, &mut tweets, spec.learning_period(), true);
    emit(&mut rng, &mut tweets, spec.test_period(), false);

    let profiles = build_profiles(
        &tweets,
        &graph,
        spec.learning_period(),
        Execution::Sequential,
    );
    let topology = Topology::new(&graph);

    let mut topics = Vec::new();
    let mut truths = Vec::new();
    for (ti, planted) in spec.topics.iter().enumerate() {
        let seeds: Vec<String> = if planted.seed_users.is_empty() {
            // seeds are drawn among users that have followers
            let candidates: Vec<usize> = (0..n)
                .filter(|&u| !graph.followers(u as u32).is_empty())
                .collect();
            rand::seq::index::sample(
                &mut rng,
                candidates.len(),
                planted.seed_count.min(candidates.len()),
            )
            .into_iter()
            .map(|i| graph.user(candidates[i] as u32).to_owned())
            .collect()
        } else {
            planted
                .seed_users
                .iter()
                .map(|s| s.to_lowercase())
                .collect()
        };
        let mut offsets: Vec<f64> = seeds
            .iter()
            .enumerate()
            .map(|(i, _)| {
                if i == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..planted.seed_spread_hours.max(f64::MIN_POSITIVE))
                }
            })
            .collect();
        offsets.sort_by(f64::total_cmp);
        let origin =
            spec.test_start + (planted.start_hour * SECONDS_PER_HOUR as f64).round() as i64;
        let window = Window {
            from: origin,
            to: origin + planted.horizon_days as i64 * SECONDS_PER_DAY,
        };
        let topic = Topic::new(&planted.id, &planted.keywords, window)?;
        let config = SimulationConfig {
            seeds: seeds
                .iter()
                .zip(&offsets)
                .map(|(u, &o)| SeedUser {
                    user: u.clone(),
                    offset_hours: o,
                })
                .collect(),
            horizon_days: planted.horizon_days,
            runs: 1,
            rng_seed: spec.rng_seed ^ 0x5eed_0000,
            clock_origin: hour_of_day(origin),
            keep_traces: true,
            exec: Execution::Sequential,
            ..Default::default()
        };
        let diffusion = LearnedDiffusion::new(
            &topology,
            &profiles,
            &spec.planted,
            &topic,
            KeywordMode::AllKeywords,
            Execution::Sequential,
        );
        let trace = simulate_once(&topology, &diffusion, &config, ti as u64)?;
        let epoch = |h: f64| origin + (h * SECONDS_PER_HOUR as f64).round() as i64;
        let mut edges = Vec::new();
        for a in &trace.activations {
            let ts = epoch(a.time);
            let user = graph.user(a.node);
            let mut words = planted.keywords.clone();
            let k = rng.random_range(1..5);
            words.extend(filler(&mut rng, k).into_iter().map(String::from));
            tweets.push(TweetRecord::new(user, ts, words.join(" ")));
            if let Some(parent) = a.parent {
                edges.push(CascadeEdge {
                    src: graph.user(parent).to_owned(),
                    dst: user.to_owned(),
                    t: ts,
                });
            }
        }
        truths.push(TopicTruth {
            id: planted.id.clone(),
            keywords: topic.keywords.clone(),
            window,
            origin,
            seeds: config.seeds.clone(),
            edges,
            activations: trace.activations.len(),
        });
        topics.push(topic);
    }

    tweets.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.author_id.cmp(&b.author_id))
            .then_with(|| a.text.cmp(&b.text))
    });
    let truth = Truth {
        model: spec.planted.clone(),
        topics: truths,
        target_density: spec.target_density(),
        density: graph.follow_density(),
    };
    Ok(SynthCorpus {
        graph,
        tweets,
        topics,
        truth,
    })
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<SynthSpec> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let spec: SynthSpec = serde_json::from_reader(std::io::BufReader::new(f))?;
    spec.validate()?;
    Ok(spec)
}
