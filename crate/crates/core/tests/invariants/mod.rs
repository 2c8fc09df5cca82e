//! Randomized invariant checks shared by the property tests and the
//! acceptance suite. Each check pairs an input strategy with a function that
//! fails the case through `prop_assert!`.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Mutex;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use tbasic_core::cascade::{generate_instances, reconstruct_cascade, ActivationEvent, Label};
use tbasic_core::corpus::{build_profiles, SocialGraph, TweetRecord};
use tbasic_core::engine::{
    simulate_once, DiffusionFunction, EdgeDiffusion, SeedUser, SimulationConfig, Topology,
};
use tbasic_core::eval::{dynamics_error, volume_error};
use tbasic_core::features::{assemble, homogeneity, time_bin, Example, FeatureVector, KeywordMode};
use tbasic_core::learn::objective;
use tbasic_core::par::Execution;
use tbasic_core::time::{clock_time_of_day, Period};
use tbasic_core::topics::{score_term, Topic, Window};

pub type Check = Result<(), TestCaseError>;

pub const START: i64 = 1_256_947_200;
const VOCAB: &[&str] = &["ipod", "music", "news", "bit.ly", "rain", "game"];

/// `(author, seconds into the month, vocabulary words, mentioned user)`.
pub type RawTweet = (usize, i64, Vec<usize>, Option<usize>);

fn tweet(users: usize) -> impl Strategy<Value = RawTweet> {
    (
        0..users,
        0..30 * 86_400i64,
        prop::collection::vec(0..VOCAB.len(), 0..4),
        prop::option::of(0..users),
    )
}

fn corpus(raw: &[RawTweet]) -> Vec<TweetRecord> {
    raw.iter()
        .map(|(a, t, words, mention)| {
            let mut text: Vec<String> = words.iter().map(|&w| VOCAB[w].to_string()).collect();
            if let Some(m) = mention {
                text.push(format!("@u{m}"));
            }
            TweetRecord::new(&format!("u{a}"), START + t, text.join(" "))
        })
        .collect()
}

fn no_follows(users: usize) -> SocialGraph {
    SocialGraph::build(
        Vec::<(&str, &str)>::new(),
        (0..users).map(|i| format!("u{i}")),
    )
    .0
}

pub fn topic() -> Topic {
    Topic::new(
        "t",
        &["ipod", "music"],
        Window {
            from: START,
            to: START + 40 * 86_400,
        },
    )
    .unwrap()
}

/// Graph over `u00..` where `(a, b)` means `a` follows `b`; self pairs dropped.
pub fn follow_graph(n: usize, edges: &[(usize, usize)]) -> SocialGraph {
    let names: Vec<String> = (0..n).map(|i| format!("u{i:02}")).collect();
    let pairs: Vec<(&str, &str)> = edges
        .iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| (names[a].as_str(), names[b].as_str()))
        .collect();
    SocialGraph::build(pairs, names.iter()).0
}

pub fn example() -> impl Strategy<Value = Example> {
    (prop::array::uniform13(0.0..=1.0f64), any::<bool>()).prop_map(|(f, y)| Example {
        features: FeatureVector(f),
        label: if y {
            Label::Diffusion
        } else {
            Label::NonDiffusion
        },
    })
}

// ---- features ---------------------------------------------------------------

pub fn feature_input() -> impl Strategy<Value = (Vec<RawTweet>, f64)> {
    (prop::collection::vec(tweet(6), 0..60), 0.0..24.0f64)
}

/// Every feature of every ordered pair lies in [0, 1] and H is symmetric.
pub fn features_in_unit_interval((raw, t): &(Vec<RawTweet>, f64)) -> Check {
    let tweets = corpus(raw);
    let profiles = build_profiles(
        &tweets,
        &no_follows(6),
        Period::unbounded(),
        Execution::Sequential,
    );
    let topic = topic();
    for a in profiles.iter() {
        for b in profiles.iter() {
            for mode in [KeywordMode::AllKeywords, KeywordMode::FirstKeyword] {
                let f = assemble(a, b, &topic, *t, mode).unwrap();
                prop_assert!(f.0.iter().all(|x| (0.0..=1.0).contains(x)), "{:?}", f);
            }
            prop_assert_eq!(homogeneity(a, b), homogeneity(b, a));
        }
    }
    Ok(())
}

pub fn receptivity_input() -> impl Strategy<Value = Vec<RawTweet>> {
    prop::collection::vec(tweet(8), 0..80)
}

pub fn receptivity_sums_to_one(raw: &[RawTweet]) -> Check {
    let tweets = corpus(raw);
    let profiles = build_profiles(
        &tweets,
        &no_follows(8),
        Period::unbounded(),
        Execution::Sequential,
    );
    let directed: u64 = profiles.iter().map(|p| p.directed_count).sum();
    prop_assert_eq!(
        directed as usize,
        tweets.iter().filter(|t| t.is_directed).count()
    );
    for p in profiles.iter() {
        prop_assert!((p.receptivity.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.receptivity.iter().all(|&r| r >= 0.0));
    }
    Ok(())
}

// ---- topics -----------------------------------------------------------------

pub fn scale_input() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(0.1..1000.0f64, 1..50), 0.01..100.0f64)
}

pub fn score_is_scale_invariant((v, lambda): &(Vec<f64>, f64)) -> Check {
    let a = score_term(v).unwrap();
    let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
    let b = score_term(&scaled).unwrap();
    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    Ok(())
}

// ---- eval -------------------------------------------------------------------

/// Paired `(predicted, real)` days, a positive scale and a shift.
pub fn series_input() -> impl Strategy<Value = (Vec<(f64, f64)>, f64, f64)> {
    (
        prop::collection::vec((0.0..100.0f64, 0.5..100.0f64), 3..40),
        0.01..100.0f64,
        -50.0..50.0f64,
    )
}

/// Both errors are unchanged by scaling both series, and the dynamics error
/// is unchanged by shifting the prediction.
pub fn metric_properties((pairs, lambda, c): &(Vec<(f64, f64)>, f64, f64)) -> Check {
    let (p, r): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let ps: Vec<f64> = p.iter().map(|x| x * lambda).collect();
    let rs: Vec<f64> = r.iter().map(|x| x * lambda).collect();
    let a = volume_error(&p, &r).unwrap();
    let b = volume_error(&ps, &rs).unwrap();
    prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "volume {} vs {}", a, b);
    let a = dynamics_error(&p, &r).unwrap();
    let b = dynamics_error(&ps, &rs).unwrap();
    prop_assert!(
        (a - b).abs() <= 1e-9 * a.max(1.0),
        "dynamics {} vs {}",
        a,
        b
    );
    let shifted: Vec<f64> = p.iter().map(|x| x + c).collect();
    let b = dynamics_error(&shifted, &r).unwrap();
    prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "shifted {} vs {}", a, b);
    Ok(())
}

// ---- learn ------------------------------------------------------------------

pub fn gradient_input() -> impl Strategy<Value = (Vec<Example>, [f64; 14], f64)> {
    (
        prop::collection::vec(example(), 2..30),
        prop::array::uniform14(-3.0..3.0f64),
        0.0..2.0f64,
    )
}

/// The analytic gradient agrees with central differences to 1e-5.
pub fn gradient_matches_finite_differences(
    (examples, params, lambda): &(Vec<Example>, [f64; 14], f64),
) -> Check {
    let (_, g) = objective(params, examples, *lambda, Execution::Sequential);
    let h = 1e-5;
    for k in 0..params.len() {
        let mut hi = *params;
        let mut lo = *params;
        hi[k] += h;
        lo[k] -= h;
        let fd = (objective(&hi, examples, *lambda, Execution::Sequential).0
            - objective(&lo, examples, *lambda, Execution::Sequential).0)
            / (2.0 * h);
        prop_assert!(
            (fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0),
            "k {} fd {} g {}",
            k,
            fd,
            g[k]
        );
    }
    Ok(())
}

// ---- cascade ----------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CascadeCase {
    n: usize,
    edges: Vec<(usize, usize)>,
    times: Vec<(usize, i64)>,
    seed: u64,
}

pub fn cascade_input() -> impl Strategy<Value = CascadeCase> {
    (
        2usize..15,
        prop::collection::vec((0usize..15, 0usize..15), 0..60),
        prop::collection::vec((0usize..15, 0i64..50), 0..15),
        any::<u64>(),
    )
        .prop_map(|(n, edges, times, seed)| CascadeCase {
            n,
            edges: edges.into_iter().map(|(a, b)| (a % n, b % n)).collect(),
            times: times.into_iter().map(|(u, t)| (u % n, t)).collect(),
            seed,
        })
}

/// Cascade edges run along follow links from earlier to later adopters,
/// every non-root adopter has exactly one, and instances are balanced.
pub fn cascade_edges_are_ordered(case: &CascadeCase) -> Check {
    let g = follow_graph(case.n, &case.edges);
    let mut seen = HashSet::new();
    let mut seq: Vec<ActivationEvent> = case
        .times
        .iter()
        .filter(|(u, _)| seen.insert(*u))
        .map(|&(u, t)| ActivationEvent {
            user_id: format!("u{u:02}"),
            time: START + t * 60,
        })
        .collect();
    seq.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.user_id.cmp(&b.user_id)));
    let cascade = reconstruct_cascade("t", &seq, &g);
    prop_assert_eq!(cascade.edges.len(), seq.len() - cascade.roots.len());
    let at: HashMap<&str, i64> = seq.iter().map(|e| (e.user_id.as_str(), e.time)).collect();
    let mut targets = HashSet::new();
    for e in &cascade.edges {
        let (src, dst) = (g.node(&e.src).unwrap(), g.node(&e.dst).unwrap());
        prop_assert!(g.follows(dst, src));
        prop_assert!(at[e.src.as_str()] < at[e.dst.as_str()]);
        prop_assert_eq!(e.t, at[e.dst.as_str()]);
        prop_assert!(targets.insert(e.dst.clone()), "two parents");
    }
    let instances = generate_instances(&cascade, &seq, &g, &topic(), case.seed);
    let pos = instances.iter().filter(|i| i.label.is_diffusion()).count();
    prop_assert_eq!(pos * 2, instances.len());
    Ok(())
}

// ---- engine -----------------------------------------------------------------

struct Recorder {
    inner: EdgeDiffusion,
    calls: Mutex<Vec<(u32, u32, f64)>>,
}

impl DiffusionFunction for Recorder {
    fn probability(&self, edge: usize, src: u32, dst: u32, tod: f64) -> f64 {
        self.calls.lock().unwrap().push((src, dst, tod));
        self.inner.probability(edge, src, dst, tod)
    }

    fn delay(&self, dst: u32) -> f64 {
        self.inner.delay(dst)
    }
}

#[derive(Debug, Clone)]
pub struct EngineCase {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    delays: Vec<f64>,
    seeds: Vec<(usize, f64)>,
    origin: f64,
    rng_seed: u64,
}

pub fn engine_input() -> impl Strategy<Value = EngineCase> {
    (
        2usize..12,
        prop::collection::vec((0usize..12, 0usize..12, 0.0..=1.0f64), 0..50),
        prop::collection::vec(0.0..30.0f64, 12),
        prop::collection::vec((0usize..12, 0.0..48.0f64), 1..4),
        0.0..24.0f64,
        any::<u64>(),
    )
        .prop_map(|(n, edges, delays, seeds, origin, rng_seed)| EngineCase {
            n,
            edges: edges
                .into_iter()
                .map(|(a, b, p)| (a % n, b % n, p))
                .collect(),
            delays: delays[..n].to_vec(),
            seeds: seeds.into_iter().map(|(u, o)| (u % n, o)).collect(),
            origin,
            rng_seed,
        })
}

/// Each edge is tried at most once, each node activates at most once and in
/// time order, every non-seed activation has a matching successful attempt,
/// and the diffusion function sees the attempt's clock time.
pub fn engine_ledger(case: &EngineCase) -> Check {
    let pairs: Vec<(usize, usize)> = case.edges.iter().map(|&(a, b, _)| (a, b)).collect();
    let g = follow_graph(case.n, &pairs);
    let topo = Topology::new(&g);
    let node = |i: usize| g.node(&format!("u{i:02}")).unwrap();
    // the last draw for a repeated pair wins, as in a map
    let probs: HashMap<(u32, u32), f64> = case
        .edges
        .iter()
        .filter(|(a, b, _)| a != b)
        .map(|&(a, b, p)| ((node(b), node(a)), p))
        .collect();
    let mut inner = EdgeDiffusion::from_fn(&topo, 0.0, |u, v| probs[&(u, v)]);
    inner.delays = case.delays.clone();
    let d = Recorder {
        inner,
        calls: Mutex::new(Vec::new()),
    };
    let cfg = SimulationConfig {
        seeds: case
            .seeds
            .iter()
            .map(|&(u, o)| SeedUser {
                user: format!("u{u:02}"),
                offset_hours: o,
            })
            .collect(),
        horizon_days: 3,
        runs: 1,
        rng_seed: case.rng_seed,
        clock_origin: case.origin,
        ..Default::default()
    };
    let trace = simulate_once(&topo, &d, &cfg, 0).unwrap();

    let mut attempted = HashSet::new();
    for a in &trace.attempts {
        prop_assert!(attempted.insert((a.src, a.dst)), "edge tried twice");
        prop_assert!(g.follows(a.dst, a.src));
    }
    let mut active = BTreeSet::new();
    let mut last = 0.0;
    for act in &trace.activations {
        prop_assert!(active.insert(act.node), "activated twice");
        prop_assert!(act.time >= last);
        prop_assert!(act.time < cfg.horizon_hours());
        last = act.time;
        if let Some(p) = act.parent {
            prop_assert!(trace
                .attempts
                .iter()
                .any(|a| a.src == p && a.dst == act.node && a.success && a.time == act.time));
        }
    }
    let calls = d.calls.lock().unwrap();
    let drawn: Vec<_> = trace.attempts.iter().filter(|a| a.drawn).collect();
    prop_assert_eq!(calls.len(), drawn.len());
    for (&(src, dst, tod), a) in calls.iter().zip(&drawn) {
        prop_assert_eq!((src, dst), (a.src, a.dst));
        prop_assert_eq!(tod, clock_time_of_day(case.origin, a.time));
        let expected = (((case.origin + a.time) % 24.0) / 4.0).floor() as usize;
        prop_assert_eq!(time_bin(tod).unwrap(), expected.min(5));
    }
    Ok(())
}
