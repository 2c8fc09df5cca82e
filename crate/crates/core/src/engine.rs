//! Continuous-time asynchronous cascade simulation.
//!
//! A node activated at time `t` schedules one delivery to each of its
//! followers at `t + r(follower)`. When a delivery is processed and the
//! follower is still inactive, it activates with the probability given by the
//! diffusion function at the delivery's time of day. Each edge is tried at
//! most once per run and activations are never undone. Every activation is
//! one tweet.
//!
//! Runs are independent. Run `i` draws from a ChaCha8 stream selected by
//! `(rng_seed, i)`, so the aggregate is identical whatever the scheduling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::SpreadingCascade;
use crate::corpus::{ProfileSet, SocialGraph, UserProfile};
use crate::features::{assemble_static, idx, time_bin, FeatureVector, KeywordMode};
use crate::learn::{estimate_delay, predict_probability, DiffusionModel};
use crate::par::{self, Execution};
use crate::time::{clock_time_of_day, SECONDS_PER_HOUR};
use crate::topics::Topic;
use crate::{Error, Result};

pub const HOURS_PER_DAY: f64 = 24.0;

/// Follower adjacency in compressed form. Edge `e` in
/// `offsets[u]..offsets[u + 1]` goes from `u` to its follower `targets[e]`.
#[derive(Debug, Clone)]
pub struct Topology<'g> {
    graph: &'g SocialGraph,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl<'g> Topology<'g> {
    pub fn new(graph: &'g SocialGraph) -> Self {
        let mut offsets = Vec::with_capacity(graph.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for u in 0..graph.len() as u32 {
            targets.extend_from_slice(graph.followers(u));
            offsets.push(targets.len());
        }
        Topology {
            graph,
            offsets,
            targets,
        }
    }

    pub fn graph(&self) -> &'g SocialGraph {
        self.graph
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// `(edge id, follower)` pairs of `u`.
    pub fn out_edges(&self, u: u32) -> impl Iterator<Item = (usize, u32)> + '_ {
        let r = self.offsets[u as usize]..self.offsets[u as usize + 1];
        r.clone().zip(self.targets[r].iter().copied())
    }

    /// Every edge as `(edge id, source, follower)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, u32, u32)> + '_ {
        (0..self.node_count() as u32)
            .flat_map(move |u| self.out_edges(u).map(move |(e, v)| (e, u, v)))
    }
}

/// Per-edge activation probability and per-receiver delay.
pub trait DiffusionFunction: Sync {
    /// Probability that `src` activates its follower `dst` over edge `edge`
    /// when evaluated at time of day `tod` (hours in `[0, 24)`).
    fn probability(&self, edge: usize, src: u32, dst: u32, tod: f64) -> f64;

    /// Hours between a sender's activation and the delivery to `dst`.
    fn delay(&self, dst: u32) -> f64;
}

/// The learned logistic diffusion function. Time-independent features of
/// every edge are computed once; receptivity is filled in per attempt.
pub struct LearnedDiffusion {
    model: DiffusionModel,
    static_features: Vec<FeatureVector>,
    profiles: Vec<UserProfile>,
    delays: Vec<f64>,
}

impl LearnedDiffusion {
    pub fn new(
        topology: &Topology<'_>,
        profiles: &ProfileSet,
        model: &DiffusionModel,
        topic: &Topic,
        mode: KeywordMode,
        exec: Execution,
    ) -> Self {
        let profiles = profiles.for_graph(topology.graph());
        let edges: Vec<(u32, u32)> = topology.edges().map(|(_, u, v)| (u, v)).collect();
        let static_features = par::map_slice(exec, &edges, |&(u, v)| {
            assemble_static(&profiles[u as usize], &profiles[v as usize], topic, mode)
        });
        let delays = profiles.iter().map(|p| estimate_delay(model, p)).collect();
        LearnedDiffusion {
            model: model.clone(),
            static_features,
            profiles,
            delays,
        }
    }
}

impl DiffusionFunction for LearnedDiffusion {
    fn probability(&self, edge: usize, src: u32, dst: u32, tod: f64) -> f64 {
        let bin = time_bin(tod).expect("time of day is normalized by the clock");
        let mut f = self.static_features[edge];
        f.0[idx::A_SRC] = self.profiles[src as usize].receptivity[bin];
        f.0[idx::A_DST] = self.profiles[dst as usize].receptivity[bin];
        predict_probability(&self.model, &f)
    }

    fn delay(&self, dst: u32) -> f64 {
        self.delays[dst as usize]
    }
}

/// Same probability and delay on every edge.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDiffusion {
    pub probability: f64,
    pub delay: f64,
}

impl DiffusionFunction for ConstantDiffusion {
    fn probability(&self, _: usize, _: u32, _: u32, _: f64) -> f64 {
        self.probability
    }

    fn delay(&self, _: u32) -> f64 {
        self.delay
    }
}

/// Fixed per-edge probabilities and per-node delays.
#[derive(Debug, Clone)]
pub struct EdgeDiffusion {
    pub probabilities: Vec<f64>,
    pub delays: Vec<f64>,
}

impl EdgeDiffusion {
    pub fn from_fn(
        topology: &Topology<'_>,
        delay: f64,
        mut p: impl FnMut(u32, u32) -> f64,
    ) -> Self {
        EdgeDiffusion {
            probabilities: topology.edges().map(|(_, u, v)| p(u, v)).collect(),
            delays: vec![delay; topology.node_count()],
        }
    }
}

impl DiffusionFunction for EdgeDiffusion {
    fn probability(&self, edge: usize, _: u32, _: u32, _: f64) -> f64 {
        self.probabilities[edge]
    }

    fn delay(&self, dst: u32) -> f64 {
        self.delays[dst as usize]
    }
}

/// When the diffusion function is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTime {
    /// At the moment the post reaches the receiver.
    #[default]
    Delivery,
    /// At the sender's activation.
    Send,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedUser {
    pub user: String,
    /// Hours after the simulation start.
    #[serde(default)]
    pub offset_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seeds: Vec<SeedUser>,
    pub horizon_days: u32,
    pub runs: usize,
    pub rng_seed: u64,
    /// Time of day, in hours, at simulation time 0.
    pub clock_origin: f64,
    #[serde(default)]
    pub eval_time: EvalTime,
    #[serde(default = "default_keep")]
    pub keep_traces: bool,
    #[serde(skip)]
    pub exec: Execution,
}

fn default_keep() -> bool {
    true
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seeds: Vec::new(),
            horizon_days: 10,
            runs: 100,
            rng_seed: 0,
            clock_origin: 0.0,
            eval_time: EvalTime::Delivery,
            keep_traces: true,
            exec: Execution::Parallel,
        }
    }
}

impl SimulationConfig {
    pub fn horizon_hours(&self) -> f64 {
        self.horizon_days as f64 * HOURS_PER_DAY
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_days == 0 {
            return Err(Error::Config("horizon must be at least one day".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if !(0.0..24.0).contains(&self.clock_origin) {
            return Err(Error::TimeOfDay(self.clock_origin));
        }
        for s in &self.seeds {
            if !(s.offset_hours >= 0.0 && s.offset_hours < self.horizon_hours()) {
                return Err(Error::Config(format!(
                    "seed {:?} offset {} is outside [0, horizon)",
                    s.user, s.offset_hours
                )));
            }
        }
        Ok(())
    }

    /// Seeds from the first `s` events of an observed activation sequence,
    /// with offsets relative to the earliest one; the clock starts at the
    /// earliest event's UTC time of day.
    pub fn seeds_from_sequence(&mut self, sequence: &[crate::cascade::ActivationEvent], s: usize) {
        let Some(first) = sequence.first() else {
            self.seeds.clear();
            return;
        };
        self.clock_origin = crate::time::hour_of_day(first.time);
        self.seeds = sequence
            .iter()
            .take(s)
            .map(|e| SeedUser {
                user: e.user_id.clone(),
                offset_hours: (e.time - first.time) as f64 / SECONDS_PER_HOUR as f64,
            })
            .collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub node: u32,
    pub time: f64,
    /// The node whose post activated this one; `None` for seeds.
    pub parent: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub src: u32,
    pub dst: u32,
    pub time: f64,
    /// False when the receiver was already active at delivery.
    pub drawn: bool,
    pub success: bool,
}

/// One run: activations in time order and every delivered attempt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub activations: Vec<Activation>,
    pub attempts: Vec<Attempt>,
}

impl Trace {
    /// Activations per day over `days` days.
    pub fn daily_counts(&self, days: usize) -> Vec<u64> {
        let mut out = vec![0; days];
        for a in &self.activations {
            let d = (a.time / HOURS_PER_DAY) as usize;
            if d < days {
                out[d] += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Seed {
        node: u32,
    },
    Delivery {
        edge: usize,
        src: u32,
        dst: u32,
        sent: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Event {
    /// Seeds go first at equal times, then deliveries by sender, so a node
    /// reached by several senders at once is credited to the smallest one.
    fn rank(&self) -> (u8, u32) {
        match self.kind {
            EventKind::Seed { .. } => (0, 0),
            EventKind::Delivery { src, .. } => (1, src),
        }
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap and we want the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.rank().cmp(&self.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn resolve_seeds(graph: &SocialGraph, seeds: &[SeedUser]) -> Result<Vec<(u32, f64)>> {
    seeds
        .iter()
        .map(|s| {
            graph
                .node(&s.user)
                .map(|n| (n, s.offset_hours))
                .ok_or_else(|| Error::UnknownSeed(s.user.clone()))
        })
        .collect()
}

fn run_stream(rng_seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(run);
    rng
}

fn run_cascade(
    topology: &Topology<'_>,
    diffusion: &dyn DiffusionFunction,
    seeds: &[(u32, f64)],
    config: &SimulationConfig,
    rng: &mut ChaCha8Rng,
) -> Trace {
    let horizon = config.horizon_hours();
    let mut active = vec![false; topology.node_count()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut trace = Trace::default();

    for &(node, offset) in seeds {
        heap.push(Event {
            time: offset,
            seq,
            kind: EventKind::Seed { node },
        });
        seq += 1;
    }

    while let Some(ev) = heap.pop() {
        if ev.time >= horizon {
            break;
        }
        let (node, parent) = match ev.kind {
            EventKind::Seed { node } => {
                if active[node as usize] {
                    continue;
                }
                (node, None)
            }
            EventKind::Delivery {
                edge,
                src,
                dst,
                sent,
            } => {
                if active[dst as usize] {
                    trace.attempts.push(Attempt {
                        src,
                        dst,
                        time: ev.time,
                        drawn: false,
                        success: false,
                    });
                    continue;
                }
                let at = match config.eval_time {
                    EvalTime::Delivery => ev.time,
                    EvalTime::Send => sent,
                };
                let p = diffusion.probability(
                    edge,
                    src,
                    dst,
                    clock_time_of_day(config.clock_origin, at),
                );
                let success = rng.random::<f64>() < p;
                trace.attempts.push(Attempt {
                    src,
                    dst,
                    time: ev.time,
                    drawn: true,
                    success,
                });
                if !success {
                    continue;
                }
                (dst, Some(src))
            }
        };
        active[node as usize] = true;
        trace.activations.push(Activation {
            node,
            time: ev.time,
            parent,
        });
        for (edge, follower) in topology.out_edges(node) {
            if active[follower as usize] {
                continue;
            }
            heap.push(Event {
                time: ev.time + diffusion.delay(follower),
                seq,
                kind: EventKind::Delivery {
                    edge,
                    src: node,
                    dst: follower,
                    sent: ev.time,
                },
            });
            seq += 1;
        }
    }
    trace
}

/// One run with the stream of run `run_index`.
pub fn simulate_once(
    topology: &Topology<'_>,
    diffusion: &dyn DiffusionFunction,
    config: &SimulationConfig,
    run_index: u64,
) -> Result<Trace> {
    config.validate()?;
    let seeds = resolve_seeds(topology.graph(), &config.seeds)?;
    let mut rng = run_stream(config.rng_seed, run_index);
    Ok(run_cascade(topology, diffusion, &seeds, config, &mut rng))
}

/// Transmitter and stifler counts at the end of each day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub transmitters: Vec<u64>,
    pub stiflers: Vec<u64>,
}

impl RoleCounts {
    /// `(transmitter density, stifler density)` per day; both 0 on days
    /// before any activation.
    pub fn densities(&self) -> Vec<(f64, f64)> {
        self.transmitters
            .iter()
            .zip(&self.stiflers)
            .map(|(&t, &s)| densities(t as f64, s as f64))
            .collect()
    }
}

fn densities(t: f64, s: f64) -> (f64, f64) {
    let n = t + s;
    if n == 0.0 {
        (0.0, 0.0)
    } else {
        (t / n, s / n)
    }
}

/// Splits the users activated by the end of each day into transmitters (at
/// least one successful outgoing transmission by then) and stiflers.
///
/// `activations` are `(user, hour)` and `transmissions` are
/// `(sender, hour of success)`, both relative to the start of day 0.
pub fn classify_roles<U: Eq + std::hash::Hash + Copy>(
    activations: &[(U, f64)],
    transmissions: &[(U, f64)],
    days: usize,
) -> RoleCounts {
    let mut first_success: std::collections::HashMap<U, f64> = std::collections::HashMap::new();
    for &(u, t) in transmissions {
        first_success
            .entry(u)
            .and_modify(|x| *x = x.min(t))
            .or_insert(t);
    }
    let mut out = RoleCounts {
        transmitters: vec![0; days],
        stiflers: vec![0; days],
    };
    for d in 0..days {
        let boundary = (d + 1) as f64 * HOURS_PER_DAY;
        for &(u, _) in activations.iter().filter(|(_, t)| *t < boundary) {
            match first_success.get(&u) {
                Some(&ts) if ts < boundary => out.transmitters[d] += 1,
                _ => out.stiflers[d] += 1,
            }
        }
    }
    out
}

pub fn classify_trace(trace: &Trace, days: usize) -> RoleCounts {
    let acts: Vec<(u32, f64)> = trace.activations.iter().map(|a| (a.node, a.time)).collect();
    let sends: Vec<(u32, f64)> = trace
        .attempts
        .iter()
        .filter(|a| a.success)
        .map(|a| (a.src, a.time))
        .collect();
    classify_roles(&acts, &sends, days)
}

/// Roles in an observed cascade, with days counted from `origin` (epoch
/// seconds).
pub fn classify_cascade(cascade: &SpreadingCascade, origin: i64, days: usize) -> RoleCounts {
    let hours = |t: i64| (t - origin) as f64 / SECONDS_PER_HOUR as f64;
    let times = cascade.activation_times();
    let acts: Vec<(&str, f64)> = times.iter().map(|(&u, &t)| (u, hours(t))).collect();
    let sends: Vec<(&str, f64)> = cascade
        .edges
        .iter()
        .map(|e| (e.src.as_str(), hours(e.t)))
        .collect();
    classify_roles(&acts, &sends, days)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Mean activations (tweets) per day.
    pub daily_volume: Vec<f64>,
    /// Mean transmitter count at the end of each day.
    pub transmitters: Vec<f64>,
    /// Mean stifler count at the end of each day.
    pub stiflers: Vec<f64>,
    pub traces: Vec<Trace>,
}

impl SimulationResult {
    pub fn role_densities(&self) -> Vec<(f64, f64)> {
        self.transmitters
            .iter()
            .zip(&self.stiflers)
            .map(|(&t, &s)| densities(t, s))
            .collect()
    }

    /// Mean number of activations per run.
    pub fn mean_total(&self) -> f64 {
        self.daily_volume.iter().sum()
    }
}

/// Monte-Carlo aggregate over `config.runs` independent runs.
pub fn simulate(
    topology: &Topology<'_>,
    diffusion: &dyn DiffusionFunction,
    config: &SimulationConfig,
) -> Result<SimulationResult> {
    config.validate()?;
    let seeds = resolve_seeds(topology.graph(), &config.seeds)?;
    let days = config.horizon_days as usize;
    let runs = par::map_range(config.exec, config.runs, |i| {
        let mut rng = run_stream(config.rng_seed, i as u64);
        let trace = run_cascade(topology, diffusion, &seeds, config, &mut rng);
        let counts = trace.daily_counts(days);
        let roles = classify_trace(&trace, days);
        (counts, roles, config.keep_traces.then_some(trace))
    });

    let mut volume = vec![0.0; days];
    let mut transmitters = vec![0.0; days];
    let mut stiflers = vec![0.0; days];
    let mut traces = Vec::new();
    for (counts, roles, trace) in runs {
        for d in 0..days {
            volume[d] += counts[d] as f64;
            transmitters[d] += roles.transmitters[d] as f64;
            stiflers[d] += roles.stiflers[d] as f64;
        }
        traces.extend(trace);
    }
    let n = config.runs as f64;
    for v in volume
        .iter_mut()
        .chain(&mut transmitters)
        .chain(&mut stiflers)
    {
        *v /= n;
    }
    Ok(SimulationResult {
        daily_volume: volume,
        transmitters,
        stiflers,
        traces,
    })
}

/// Predicts a topic's daily volume with a trained model.
pub fn predict(
    graph: &SocialGraph,
    profiles: &ProfileSet,
    model: &DiffusionModel,
    topic: &Topic,
    mode: KeywordMode,
    config: &SimulationConfig,
) -> Result<SimulationResult> {
    model.validate()?;
    let topology = Topology::new(graph);
    let diffusion = LearnedDiffusion::new(&topology, profiles, model, topic, mode, config.exec);
    simulate(&topology, &diffusion, config)
}

/// Writes `day,predicted_volume,transmitter_density,stifler_density`, days
/// numbered from 1.
pub fn write_prediction(
    path: impl AsRef<std::path::Path>,
    result: &SimulationResult,
) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let mut w =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "day,predicted_volume,transmitter_density,stifler_density"
    )
    .map_err(io)?;
    for (d, (v, (t, s))) in result
        .daily_volume
        .iter()
        .zip(result.role_densities())
        .enumerate()
    {
        writeln!(w, "{},{},{},{}", d + 1, v, t, s).map_err(io)?;
    }
    w.flush().map_err(io)
}
