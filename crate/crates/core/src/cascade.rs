//! Activation sequences, Last-Influence cascade reconstruction and labelled
//! instance generation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SocialGraph, TweetRecord};
use crate::time::SECONDS_PER_HOUR;
use crate::topics::{match_tweet, Topic};
use crate::{Error, Result};

/// A user's first adoption of a topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationEvent {
    #[serde(rename = "user")]
    pub user_id: String,
    #[serde(rename = "t")]
    pub time: i64,
}

/// Topic adoptions ordered by time, then user id; one event per user.
pub fn activation_sequence(topic: &Topic, tweets: &[TweetRecord]) -> Vec<ActivationEvent> {
    let mut first: HashMap<&str, i64> = HashMap::new();
    for t in tweets.iter().filter(|t| match_tweet(topic, t)) {
        first
            .entry(&t.author_id)
            .and_modify(|e| *e = (*e).min(t.timestamp))
            .or_insert(t.timestamp);
    }
    let mut seq: Vec<ActivationEvent> = first
        .into_iter()
        .map(|(u, t)| ActivationEvent {
            user_id: u.to_owned(),
            time: t,
        })
        .collect();
    seq.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.user_id.cmp(&b.user_id)));
    seq
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeEdge {
    /// Influencer (a followee of `dst`).
    pub src: String,
    /// Adopter.
    pub dst: String,
    /// Adopter's activation time.
    pub t: i64,
}

/// Influence forest of one topic: every activated user is either a root or
/// the target of exactly one edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadingCascade {
    pub topic_id: String,
    pub roots: Vec<ActivationEvent>,
    pub edges: Vec<CascadeEdge>,
}

impl SpreadingCascade {
    /// The first activation, if any.
    pub fn root(&self) -> Option<&ActivationEvent> {
        self.roots.first()
    }

    /// Activation time of every user in the cascade.
    pub fn activation_times(&self) -> HashMap<&str, i64> {
        self.roots
            .iter()
            .map(|r| (r.user_id.as_str(), r.time))
            .chain(self.edges.iter().map(|e| (e.dst.as_str(), e.t)))
            .collect()
    }

    /// `(receiver, delay in hours)` for every edge.
    pub fn edge_delays(&self) -> Vec<(&str, f64)> {
        let times = self.activation_times();
        self.edges
            .iter()
            .filter_map(|e| {
                let ts = *times.get(e.src.as_str())?;
                Some((e.dst.as_str(), (e.t - ts) as f64 / SECONDS_PER_HOUR as f64))
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

/// Rebuilds the cascade with the Last-Influence rule: each adopter is
/// attributed to the followee that adopted most recently, strictly before it.
/// Ties go to the smaller user id. Adopters without such a followee, or
/// outside the graph, become roots.
pub fn reconstruct_cascade(
    topic_id: &str,
    sequence: &[ActivationEvent],
    graph: &SocialGraph,
) -> SpreadingCascade {
    let times: HashMap<u32, i64> = sequence
        .iter()
        .filter_map(|e| Some((graph.node(&e.user_id)?, e.time)))
        .collect();
    let mut roots = Vec::new();
    let mut edges = Vec::new();
    for ev in sequence {
        let influencer = graph.node(&ev.user_id).and_then(|v| {
            graph
                .followees(v)
                .iter()
                .filter_map(|&f| times.get(&f).map(|&t| (t, f)))
                .filter(|&(t, _)| t < ev.time)
                // latest time wins; on equal time the smaller node (user id)
                .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)))
        });
        match influencer {
            Some((_, f)) => edges.push(CascadeEdge {
                src: graph.user(f).to_owned(),
                dst: ev.user_id.clone(),
                t: ev.time,
            }),
            None => roots.push(ev.clone()),
        }
    }
    SpreadingCascade {
        topic_id: topic_id.to_owned(),
        roots,
        edges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "diffusion")]
    Diffusion,
    #[serde(rename = "non-diffusion")]
    NonDiffusion,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Diffusion => "diffusion",
            Label::NonDiffusion => "non-diffusion",
        }
    }

    pub fn is_diffusion(self) -> bool {
        self == Label::Diffusion
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub sender: String,
    pub receiver: String,
    pub topic_id: String,
    #[serde(rename = "epoch")]
    pub time: i64,
    pub label: Label,
}

fn for_each_negative<'a>(
    sequence: &'a [ActivationEvent],
    graph: &'a SocialGraph,
    mut f: impl FnMut(&'a ActivationEvent, &'a str),
) {
    let active: std::collections::HashSet<&str> =
        sequence.iter().map(|e| e.user_id.as_str()).collect();
    for ev in sequence {
        let Some(u) = graph.node(&ev.user_id) else {
            continue;
        };
        for &w in graph.followers(u) {
            let wid = graph.user(w);
            if !active.contains(wid) {
                f(ev, wid);
            }
        }
    }
}

/// Sizes of the two classes before balancing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCounts {
    pub diffusion: usize,
    pub non_diffusion: usize,
}

impl CandidateCounts {
    /// Counts the pairs [`generate_instances`] would draw from, without
    /// subsampling.
    pub fn of(
        cascade: &SpreadingCascade,
        sequence: &[ActivationEvent],
        graph: &SocialGraph,
    ) -> Self {
        let mut non_diffusion = 0;
        for_each_negative(sequence, graph, |_, _| non_diffusion += 1);
        CandidateCounts {
            diffusion: cascade.edges.len(),
            non_diffusion,
        }
    }

    pub fn add(&mut self, other: CandidateCounts) {
        self.diffusion += other.diffusion;
        self.non_diffusion += other.non_diffusion;
    }

    /// `ln(non_diffusion / diffusion)`, the log prior odds against diffusion.
    pub fn log_odds(&self) -> Result<f64> {
        if self.diffusion == 0 || self.non_diffusion == 0 {
            return Err(Error::Config(format!(
                "class counts {}/{} give no prior odds",
                self.diffusion, self.non_diffusion
            )));
        }
        Ok((self.non_diffusion as f64 / self.diffusion as f64).ln())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

/// Labelled pairs for one topic.
///
/// Diffusion pairs are the cascade edges, stamped with the adopter's
/// activation time. Non-diffusion pairs are `(u, w)` where `u` activated and
/// `w` follows `u` but never activated, stamped with `u`'s activation time.
/// The larger class is subsampled uniformly (seeded) down to the size of the
/// smaller one. A cascade without edges yields no instances.
pub fn generate_instances(
    cascade: &SpreadingCascade,
    sequence: &[ActivationEvent],
    graph: &SocialGraph,
    topic: &Topic,
    balance_seed: u64,
) -> Vec<LabeledInstance> {
    if cascade.edges.is_empty() {
        log::warn!("topic {}: cascade has no diffusion edges", topic.id);
        return Vec::new();
    }
    let positives: Vec<LabeledInstance> = cascade
        .edges
        .iter()
        .map(|e| LabeledInstance {
            sender: e.src.clone(),
            receiver: e.dst.clone(),
            topic_id: topic.id.clone(),
            time: e.t,
            label: Label::Diffusion,
        })
        .collect();

    let mut negatives = Vec::new();
    for_each_negative(sequence, graph, |ev, wid| {
        negatives.push(LabeledInstance {
            sender: ev.user_id.clone(),
            receiver: wid.to_owned(),
            topic_id: topic.id.clone(),
            time: ev.time,
            label: Label::NonDiffusion,
        })
    });

    let n = positives.len().min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(balance_seed);
    let subsample = |v: Vec<LabeledInstance>, rng: &mut ChaCha8Rng| {
        if v.len() == n {
            return v;
        }
        let mut keep = rand::seq::index::sample(rng, v.len(), n).into_vec();
        keep.sort_unstable();
        keep.into_iter().map(|i| v[i].clone()).collect::<Vec<_>>()
    };
    let mut out = subsample(positives, &mut rng);
    out.extend(subsample(negatives, &mut rng));
    out
}

const INSTANCE_HEADER: &str = "sender,receiver,topic_id,epoch,label";

/// Writes `sender,receiver,topic_id,epoch,label` rows.
pub fn write_instances(path: impl AsRef<Path>, instances: &[LabeledInstance]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for inst in instances {
        w.serialize(inst).map_err(|e| csv_err(path, e))?;
    }
    if instances.is_empty() {
        drop(w);
        std::fs::write(path, format!("{INSTANCE_HEADER}\n")).map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<LabeledInstance>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Malformed {
                path: path.to_owned(),
                line: i + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed {
            path: path.to_owned(),
            line: 0,
            reason: format!("{other:?}"),
        },
    }
}
