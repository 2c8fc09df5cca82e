use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbasic_core::cascade::{reconstruct_cascade, ActivationEvent};
use tbasic_core::corpus::SocialGraph;
use tbasic_core::engine::{
    simulate, simulate_once, ConstantDiffusion, EdgeDiffusion, SeedUser, SimulationConfig, Topology,
};
use tbasic_core::par::Execution;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i}")).collect()
}

fn graph(n: usize, follows: &[(usize, usize)]) -> SocialGraph {
    let names = names(n);
    let pairs: Vec<(&str, &str)> = follows
        .iter()
        .map(|&(a, b)| (names[a].as_str(), names[b].as_str()))
        .collect();
    SocialGraph::build(pairs, names.iter()).0
}

fn config(seeds: &[&str], runs: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        seeds: seeds
            .iter()
            .map(|s| SeedUser {
                user: s.to_string(),
                offset_hours: 0.0,
            })
            .collect(),
        runs,
        rng_seed: seed,
        ..Default::default()
    }
}

/// Exact activation probability of every node, by enumerating which edges
/// would fire.
fn enumerate(n: usize, edges: &[(usize, usize, f64)], seeds: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for mask in 0u32..(1 << edges.len()) {
        let mut weight = 1.0;
        for (k, e) in edges.iter().enumerate() {
            weight *= if mask >> k & 1 == 1 { e.2 } else { 1.0 - e.2 };
        }
        if weight == 0.0 {
            continue;
        }
        let mut reached = vec![false; n];
        let mut stack: Vec<usize> = seeds.to_vec();
        for &s in seeds {
            reached[s] = true;
        }
        while let Some(u) = stack.pop() {
            for (k, &(src, dst, _)) in edges.iter().enumerate() {
                if src == u && mask >> k & 1 == 1 && !reached[dst] {
                    reached[dst] = true;
                    stack.push(dst);
                }
            }
        }
        for v in 0..n {
            if reached[v] {
                out[v] += weight;
            }
        }
    }
    out
}

fn frequencies(g: &SocialGraph, diffusion: &EdgeDiffusion, cfg: &SimulationConfig) -> Vec<f64> {
    let topo = Topology::new(g);
    let res = simulate(&topo, diffusion, cfg).unwrap();
    let mut counts = vec![0usize; g.len()];
    for t in &res.traces {
        for a in &t.activations {
            counts[a.node as usize] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / cfg.runs as f64).collect()
}

#[test]
fn bernoulli_two_nodes() {
    let g = graph(2, &[(1, 0)]);
    let topo = Topology::new(&g);
    for &p in &[0.0, 0.2, 0.5, 0.9, 1.0] {
        let cfg = config(&["n0"], 20_000, 3);
        let res = simulate(
            &topo,
            &ConstantDiffusion {
                probability: p,
                delay: 0.0,
            },
            &cfg,
        )
        .unwrap();
        let freq = res.mean_total() - 1.0;
        let se = (p * (1.0 - p) / 20_000.0).sqrt();
        assert!((freq - p).abs() <= 3.0 * se, "p {p} freq {freq}");
    }
}

#[test]
fn three_node_path() {
    // c follows b follows a
    let g = graph(3, &[(1, 0), (2, 1)]);
    let topo = Topology::new(&g);
    let p = 0.6;
    let runs = 20_000;
    let res = simulate(
        &topo,
        &ConstantDiffusion {
            probability: p,
            delay: 0.0,
        },
        &config(&["n0"], runs, 11),
    )
    .unwrap();
    let expected = 1.0 + p + p * p;
    // totals are 1, 2 or 3 with probabilities (1-p), p(1-p), p²
    let second = (1.0 - p) + 4.0 * p * (1.0 - p) + 9.0 * p * p;
    let se = ((second - expected * expected) / runs as f64).sqrt();
    assert!((res.mean_total() - expected).abs() <= 3.0 * se);
}

#[test]
fn matches_enumeration_on_small_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..10 {
        let n = rng.random_range(2..=5);
        let mut follows = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && rng.random_bool(0.4) {
                    follows.push((a, b));
                }
            }
        }
        follows.truncate(12);
        let g = graph(n, &follows);
        let topo = Topology::new(&g);
        let probs: HashMap<(u32, u32), f64> = topo
            .edges()
            .map(|(_, u, v)| ((u, v), (rng.random_range(0..=10) as f64) / 10.0))
            .collect();
        let diffusion = EdgeDiffusion::from_fn(&topo, 0.0, |u, v| probs[&(u, v)]);
        let edges: Vec<(usize, usize, f64)> = topo
            .edges()
            .map(|(_, u, v)| (u as usize, v as usize, probs[&(u, v)]))
            .collect();
        let seed = g.node("n0").unwrap() as usize;
        let exact = enumerate(n, &edges, &[seed]);
        let runs = 20_000;
        let got = frequencies(&g, &diffusion, &config(&["n0"], runs, case));
        for v in 0..n {
            let q = exact[v];
            let se = (q * (1.0 - q) / runs as f64).sqrt();
            assert!(
                (got[v] - q).abs() <= 3.0 * se + 1e-12,
                "case {case} node {v}: {} vs {q}",
                got[v]
            );
        }
    }
}

#[test]
fn empty_and_isolated_seeds() {
    let g = graph(3, &[(1, 0)]);
    let topo = Topology::new(&g);
    let d = ConstantDiffusion {
        probability: 1.0,
        delay: 1.0,
    };
    let t = simulate_once(&topo, &d, &config(&[], 1, 0), 0).unwrap();
    assert!(t.activations.is_empty());
    let t = simulate_once(&topo, &d, &config(&["n2"], 1, 0), 0).unwrap();
    assert_eq!(t.activations.len(), 1);
    assert_eq!(t.activations[0].time, 0.0);
    assert_eq!(t.daily_counts(10)[0], 1);
    assert!(simulate_once(&topo, &d, &config(&["ghost"], 1, 0), 0).is_err());
}

#[test]
fn one_run_equals_simulate_once() {
    let g = graph(4, &[(1, 0), (2, 0), (3, 1), (3, 2)]);
    let topo = Topology::new(&g);
    let d = ConstantDiffusion {
        probability: 0.5,
        delay: 20.0,
    };
    let cfg = config(&["n0"], 1, 9);
    let once = simulate_once(&topo, &d, &cfg, 0).unwrap();
    let agg = simulate(&topo, &d, &cfg).unwrap();
    let binned: Vec<f64> = once.daily_counts(10).iter().map(|&c| c as f64).collect();
    assert_eq!(agg.daily_volume, binned);
}

#[test]
fn sequential_and_parallel_agree() {
    let follows: Vec<(usize, usize)> = (1..40)
        .map(|i| (i, (i * 7) % i))
        .chain((2..40).map(|i| (i, i - 1)))
        .collect();
    let g = graph(40, &follows);
    let topo = Topology::new(&g);
    let d = ConstantDiffusion {
        probability: 0.4,
        delay: 3.0,
    };
    let mut cfg = config(&["n0"], 200, 5);
    cfg.exec = Execution::Sequential;
    let a = simulate(&topo, &d, &cfg).unwrap();
    cfg.exec = Execution::Parallel;
    let b = simulate(&topo, &d, &cfg).unwrap();
    assert_eq!(a.daily_volume, b.daily_volume);
    assert_eq!(a.traces, b.traces);
    let c = simulate(&topo, &d, &cfg).unwrap();
    assert_eq!(b.daily_volume, c.daily_volume);
}

#[test]
fn roles_on_a_chain_and_a_star() {
    let chain = graph(3, &[(1, 0), (2, 1)]);
    let topo = Topology::new(&chain);
    let d = ConstantDiffusion {
        probability: 1.0,
        delay: 1.0,
    };
    let res = simulate(&topo, &d, &config(&["n0"], 1, 0)).unwrap();
    assert_eq!(res.transmitters[0], 2.0);
    assert_eq!(res.stiflers[0], 1.0);

    let star = graph(4, &[(1, 0), (2, 0), (3, 0)]);
    let topo = Topology::new(&star);
    let res = simulate(&topo, &d, &config(&["n0"], 1, 0)).unwrap();
    assert_eq!(res.role_densities()[0], (0.25, 0.75));
}

/// With probability-1 edges and one delay for every node, the engine's
/// transmission tree is what Last Influence rebuilds from the activation
/// times.
#[test]
fn reconstruction_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let n = rng.random_range(2..30);
        let mut follows = BTreeSet::new();
        for v in 1..n {
            follows.insert((v, rng.random_range(0..v)));
            for _ in 0..rng.random_range(0..3) {
                let u = rng.random_range(0..n);
                if u != v {
                    follows.insert((v, u));
                }
            }
        }
        let follows: Vec<(usize, usize)> = follows.into_iter().collect();
        let g = graph(n, &follows);
        let topo = Topology::new(&g);
        let delay = rng.random_range(1..6) as f64 * 0.5;
        let d = ConstantDiffusion {
            probability: 1.0,
            delay,
        };
        let mut cfg = config(&["n0"], 1, 0);
        cfg.horizon_days = 30;
        let trace = simulate_once(&topo, &d, &cfg, 0).unwrap();

        let base = 1_260_000_000i64;
        let seq: Vec<ActivationEvent> = trace
            .activations
            .iter()
            .map(|a| ActivationEvent {
                user_id: g.user(a.node).to_owned(),
                time: base + (a.time * 3600.0).round() as i64,
            })
            .collect();
        let cascade = reconstruct_cascade("t", &seq, &g);
        let rebuilt: BTreeSet<(String, String)> = cascade
            .edges
            .iter()
            .map(|e| (e.src.clone(), e.dst.clone()))
            .collect();
        let engine: BTreeSet<(String, String)> = trace
            .activations
            .iter()
            .filter_map(|a| Some((g.user(a.parent?).to_owned(), g.user(a.node).to_owned())))
            .collect();
        assert_eq!(rebuilt, engine);
        assert_eq!(cascade.roots.len(), 1);
    }
}
