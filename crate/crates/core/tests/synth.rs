use tbasic_core::cascade::activation_sequence;
use tbasic_core::corpus::build_profiles;
use tbasic_core::features::activity;
use tbasic_core::learn::calibrate_sigma;
use tbasic_core::par::Execution;
use tbasic_core::synth::{generate, load_spec, SynthSpec};

fn small(topics: usize) -> SynthSpec {
    SynthSpec {
        n_users: 300,
        max_degree: 60,
        ..SynthSpec::default().with_topics(topics)
    }
}

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn files_are_identical_across_invocations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_users: 100,
        max_degree: 30,
        ..Default::default()
    };
    generate(&spec).unwrap().write(a.path()).unwrap();
    generate(&spec).unwrap().write(b.path()).unwrap();
    let fa = read_all(a.path());
    assert_eq!(
        fa.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(),
        ["edges.tsv", "topics.json", "truth.json", "tweets.txt"]
    );
    assert_eq!(fa, read_all(b.path()));

    let other = generate(&SynthSpec {
        rng_seed: 43,
        ..spec
    })
    .unwrap();
    let c = tempfile::tempdir().unwrap();
    other.write(c.path()).unwrap();
    assert_ne!(fa, read_all(c.path()));
}

#[test]
fn spec_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(&path, r#"{"n_users": 50, "max_degree": 20, "rng_seed": 9}"#).unwrap();
    let spec = load_spec(&path).unwrap();
    assert_eq!((spec.n_users, spec.max_degree, spec.rng_seed), (50, 20, 9));
    assert_eq!(spec.planted, SynthSpec::default().planted);

    std::fs::write(&path, r#"{"n_users": 1}"#).unwrap();
    assert!(load_spec(&path).is_err());
}

#[test]
fn sigma_recovered_from_planted_delays() {
    let spec = small(3);
    let c = generate(&spec).unwrap();
    let profiles = build_profiles(
        &c.tweets,
        &c.graph,
        spec.learning_period(),
        Execution::Parallel,
    );
    let mut obs = Vec::new();
    for (topic, truth) in c.topics.iter().zip(&c.truth.topics) {
        let seq = activation_sequence(topic, &c.tweets);
        assert_eq!(seq.len(), truth.activations);
        let cascade = truth.cascade(&seq);
        assert_eq!(cascade.roots.len() + cascade.edges.len(), seq.len());
        for (dst, d) in cascade.edge_delays() {
            obs.push((d, activity(&profiles.get_or_empty(dst))));
        }
    }
    assert!(obs.len() >= 20, "only {} planted edges", obs.len());
    let fit = calibrate_sigma(&obs, Execution::Parallel).unwrap();
    assert!((fit.sigma - 7.0).abs() <= 0.2, "{fit:?}");
}

#[test]
fn planted_tweets_fall_in_topic_windows() {
    let c = generate(&small(4)).unwrap();
    for (topic, truth) in c.topics.iter().zip(&c.truth.topics) {
        assert_eq!(topic.window, truth.window);
        let seq = activation_sequence(topic, &c.tweets);
        assert_eq!(seq.first().unwrap().time, truth.origin);
        assert!(seq.iter().all(|e| truth.window.contains(e.time)));
    }
}
