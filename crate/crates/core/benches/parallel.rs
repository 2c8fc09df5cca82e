use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tbasic_core::cascade::{activation_sequence, generate_instances, reconstruct_cascade};
use tbasic_core::corpus::{build_profiles, ProfileSet};
use tbasic_core::engine::{predict, SimulationConfig};
use tbasic_core::features::{extract, Example, KeywordMode};
use tbasic_core::learn::{objective, train, TrainOptions};
use tbasic_core::par::Execution;
use tbasic_core::synth::{generate, SynthCorpus, SynthSpec};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

struct Fixture {
    corpus: SynthCorpus,
    profiles: ProfileSet,
    examples: Vec<Example>,
    instances: Vec<tbasic_core::cascade::LabeledInstance>,
}

fn fixture() -> Fixture {
    let spec = SynthSpec::default().with_topics(6);
    let corpus = generate(&spec).unwrap();
    let profiles = build_profiles(
        &corpus.tweets,
        &corpus.graph,
        spec.learning_period(),
        Execution::Parallel,
    );
    let mut instances = Vec::new();
    for (i, topic) in corpus.topics.iter().enumerate() {
        let seq = activation_sequence(topic, &corpus.tweets);
        let cascade = reconstruct_cascade(&topic.id, &seq, &corpus.graph);
        instances.extend(generate_instances(
            &cascade,
            &seq,
            &corpus.graph,
            topic,
            i as u64,
        ));
    }
    let examples = extract(
        &instances,
        &profiles,
        &corpus.topics,
        KeywordMode::AllKeywords,
        Execution::Parallel,
    )
    .unwrap();
    Fixture {
        corpus,
        profiles,
        examples,
        instances,
    }
}

fn benches(c: &mut Criterion) {
    let fx = fixture();
    let model = fx.corpus.truth.model.clone();
    let topic = &fx.corpus.topics[0];

    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SimulationConfig {
            seeds: fx.corpus.truth.topics[0].seeds.clone(),
            runs: 100,
            exec,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| {
                predict(
                    &fx.corpus.graph,
                    &fx.profiles,
                    &model,
                    topic,
                    KeywordMode::AllKeywords,
                    cfg,
                )
                .unwrap()
            })
        });
    }
    g.finish();

    // objective chunks are 1024 rows, so repeat the set to give rayon work
    let many: Vec<Example> = fx
        .examples
        .iter()
        .cycle()
        .take(64 * 1024)
        .cloned()
        .collect();
    let params = model.params();
    let mut g = c.benchmark_group("objective");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| objective(black_box(&params), &many, 1.0, exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = TrainOptions {
            exec,
            ..Default::default()
        };
        g.bench_function(name, |b| b.iter(|| train(&many, &opts).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("extract");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                extract(
                    &fx.instances,
                    &fx.profiles,
                    &fx.corpus.topics,
                    KeywordMode::AllKeywords,
                    exec,
                )
                .unwrap()
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("profiles");
    g.sample_size(10);
    let period = SynthSpec::default().learning_period();
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| build_profiles(&fx.corpus.tweets, &fx.corpus.graph, period, exec))
        });
    }
    g.finish();
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
