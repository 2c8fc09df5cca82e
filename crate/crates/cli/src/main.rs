use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tbasic_cli::config::{SimulationOptions, TermOptions};
use tbasic_cli::failure::{Failure, Outcome};
use tbasic_cli::{run_pipeline, stages, timefmt, PipelineConfig};
use tbasic_core::engine::EvalTime;
use tbasic_core::features::KeywordMode;
use tbasic_core::learn::TrainOptions;
use tbasic_core::par::Execution;
use tbasic_core::time::Period;

#[derive(Parser)]
#[command(
    name = "tbasic",
    version,
    about = "Topic cascades over a follower graph: learn, simulate, evaluate"
)]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build per-user behaviour profiles from a learning period.
    Profiles {
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[command(flatten)]
        period: Window,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank terms by burstiness over a period.
    ScoreTerms {
        #[arg(long)]
        tweets: PathBuf,
        #[command(flatten)]
        period: Window,
        #[arg(long, default_value_t = 50)]
        top: usize,
        /// Minimum occurrences over the period.
        #[arg(long, default_value_t = 10)]
        min_count: u64,
        #[arg(long, default_value_t = 24)]
        bin_hours: u32,
        /// Co-occurring terms to list next to each ranked term.
        #[arg(long, default_value_t = 0)]
        cooccur: usize,
        /// CSV output; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Terms appearing most often in the same tweets as TERM.
    Cooccur {
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        term: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[command(flatten)]
        period: OptWindow,
    },
    /// Reconstruct cascades and write labelled instances per topic.
    Cascades {
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[command(flatten)]
        period: OptWindow,
        /// Topic i balances its instances with this seed plus i.
        #[arg(long, default_value_t = 7)]
        balance_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the 13 features of every labelled instance.
    Features {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long, value_enum, default_value_t = Keywords::AllKeywords)]
        keyword_mode: Keywords,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the diffusion model.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Cross-validation folds; 0 skips cross-validation.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class counts written by `cascades`; shifts the intercept to the
        /// unbalanced candidate ratio.
        #[arg(long)]
        prior_correction: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training summary JSON; standard output when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit the delay scale sigma on reconstructed cascades.
    Calibrate {
        #[arg(long)]
        cascades: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Where to write the calibrated model; overwrites --model when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict a topic's daily volume by Monte-Carlo simulation.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        topic: String,
        /// Activation sequence CSV `user_id,epoch`; its first --seed-count
        /// rows seed the run.
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long, default_value_t = 20)]
        seed_count: usize,
        #[arg(long, default_value_t = 10)]
        days: u32,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 42)]
        rng: u64,
        #[arg(long, value_enum, default_value_t = Eval::Delivery)]
        eval_time: Eval,
        #[arg(long, value_enum, default_value_t = Keywords::AllKeywords)]
        keyword_mode: Keywords,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction and the 1-time-lag baseline against real volume.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with planted cascades.
    Synth {
        /// Spec JSON; defaults apply to absent fields and to a missing file.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Replace the spec's topics by this many generated ones.
        #[arg(long)]
        topics: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Window {
    /// Start, ISO 8601 (UTC unless an offset is given).
    #[arg(long)]
    from: String,
    /// End, exclusive.
    #[arg(long)]
    to: String,
}

impl Window {
    fn period(&self) -> Outcome<Period> {
        timefmt::period(&self.from, &self.to)
    }
}

#[derive(Args)]
struct OptWindow {
    #[arg(long, requires = "to")]
    from: Option<String>,
    #[arg(long, requires = "from")]
    to: Option<String>,
}

impl OptWindow {
    fn period(&self) -> Outcome<Period> {
        match (&self.from, &self.to) {
            (Some(a), Some(b)) => timefmt::period(a, b),
            _ => Ok(Period::unbounded()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Keywords {
    AllKeywords,
    FirstKeyword,
}

impl From<Keywords> for KeywordMode {
    fn from(k: Keywords) -> Self {
        match k {
            Keywords::AllKeywords => KeywordMode::AllKeywords,
            Keywords::FirstKeyword => KeywordMode::FirstKeyword,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Eval {
    Delivery,
    Send,
}

impl From<Eval> for EvalTime {
    fn from(e: Eval) -> Self {
        match e {
            Eval::Delivery => EvalTime::Delivery,
            Eval::Send => EvalTime::Send,
        }
    }
}

fn check(ok: bool, msg: &str) -> Outcome<()> {
    if ok {
        Ok(())
    } else {
        Err(Failure::input(msg))
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::stage("output", e))?;
    println!("{text}");
    Ok(())
}

fn output(path: &Option<PathBuf>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(stages::create("output", p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn dispatch(command: Command, exec: Execution) -> Outcome<()> {
    match command {
        Command::Profiles {
            tweets,
            edges,
            period,
            out,
        } => {
            let period = period.period()?;
            let n = stages::profiles(&tweets, &edges, period, &out, exec)?;
            eprintln!("{n} profiles written to {}", out.display());
        }
        Command::ScoreTerms {
            tweets,
            period,
            top,
            min_count,
            bin_hours,
            cooccur,
            out,
        } => {
            check(top >= 1, "--top must be at least 1")?;
            check(
                bin_hours >= 1 && 24 % bin_hours == 0,
                "--bin-hours must divide 24",
            )?;
            let period = period.period()?;
            let tweets = stages::load_tweets(&tweets, period)?;
            let opts = TermOptions {
                top,
                min_total_count: min_count,
                bin_hours,
                cooccur,
            };
            let rows = stages::term_table(&tweets, period, &opts, exec)?;
            stages::write_csv("score-terms", output(&out)?, &rows)?;
        }
        Command::Cooccur {
            tweets,
            term,
            top,
            period,
        } => {
            check(top >= 1, "--top must be at least 1")?;
            let period = period.period()?;
            let tweets = stages::load_tweets(&tweets, period)?;
            let rows = tbasic_core::topics::cooccurring_terms(&tweets, &term, period, top);
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            let io = |e: csv::Error| Failure::stage("cooccur", e);
            w.write_record(["term", "count"]).map_err(io)?;
            for (t, c) in rows {
                w.write_record([t, c.to_string()]).map_err(io)?;
            }
            w.flush().map_err(|e| Failure::stage("cooccur", e))?;
        }
        Command::Cascades {
            topics,
            tweets,
            edges,
            period,
            balance_seed,
            out,
        } => {
            let period = period.period()?;
            let topics = stages::load_topics(&topics)?;
            let graph = stages::load_graph(&edges)?;
            let tweets = stages::load_tweets(&tweets, period)?;
            let summary = stages::cascades(&topics, &tweets, &graph, balance_seed, &out)?;
            print_json(&summary)?;
        }
        Command::Features {
            instances,
            profiles,
            topics,
            keyword_mode,
            out,
        } => {
            let n = stages::features(
                &instances,
                &profiles,
                &topics,
                keyword_mode.into(),
                &out,
                exec,
            )?;
            eprintln!("{n} feature rows written to {}", out.display());
        }
        Command::Train {
            features,
            lambda,
            folds,
            seed,
            prior_correction,
            out,
            report,
        } => {
            check(
                lambda >= 0.0 && lambda.is_finite(),
                "--lambda must be a non-negative number",
            )?;
            check(folds != 1, "--folds must be 0 or at least 2")?;
            let opts = TrainOptions {
                lambda,
                seed,
                exec,
                ..Default::default()
            };
            let summary =
                stages::train(&features, &opts, folds, prior_correction.as_deref(), &out)?;
            match report {
                Some(p) => stages::write_json("train", &p, &summary)?,
                None => print_json(&summary)?,
            }
        }
        Command::Calibrate {
            cascades,
            profiles,
            model,
            out,
        } => {
            let target = out.unwrap_or_else(|| model.clone());
            let fit = stages::calibrate(&cascades, &profiles, &model, &target, exec)?;
            print_json(&fit)?;
        }
        Command::Simulate {
            model,
            edges,
            profiles,
            topics,
            topic,
            seeds,
            seed_count,
            days,
            runs,
            rng,
            eval_time,
            keyword_mode,
            out,
        } => {
            check(seed_count >= 1, "--seed-count must be at least 1")?;
            check(days >= 1, "--days must be at least 1")?;
            check(runs >= 1, "--runs must be at least 1")?;
            let topics = stages::load_topics(&topics)?;
            let topic = topics.iter().find(|t| t.id == topic).ok_or_else(|| {
                Failure::input(format!("topic {topic:?} is not in the topic file"))
            })?;
            let seq = stages::read_sequence(&seeds)?;
            let model = stages::load_model(&model)?;
            let graph = stages::load_graph(&edges)?;
            let profiles = stages::load_profiles(&profiles)?;
            let opts = SimulationOptions {
                seeds: seed_count,
                days,
                runs,
                rng_seed: rng,
                eval_time: eval_time.into(),
            };
            let result = stages::simulate(
                &graph,
                &profiles,
                &model,
                topic,
                &seq,
                &opts,
                keyword_mode.into(),
                exec,
            )?;
            stages::save_prediction(&out, &result)?;
        }
        Command::Evaluate { pred, real, out } => {
            let report = stages::evaluate(&pred, &real)?;
            stages::write_json("evaluate", &out, &report)?;
        }
        Command::Synth { spec, topics, out } => {
            let mut spec = match spec {
                Some(p) => {
                    tbasic_cli::failure::require(&p)?;
                    tbasic_core::synth::load_spec(&p)
                        .map_err(|e| Failure::input(format!("{}: {e}", p.display())))?
                }
                None => Default::default(),
            };
            if let Some(n) = topics {
                check(n >= 1, "--topics must be at least 1")?;
                spec = spec.with_topics(n);
            }
            spec.validate().map_err(Failure::input)?;
            let corpus =
                tbasic_core::synth::generate(&spec).map_err(|e| Failure::stage("synth", e))?;
            corpus.write(&out).map_err(|e| Failure::stage("synth", e))?;
            stages::write_json("synth", &out.join("spec.json"), &spec)?;
            eprintln!(
                "{} users, {} tweets, {} topics written to {}",
                corpus.graph.len(),
                corpus.tweets.len(),
                corpus.topics.len(),
                out.display()
            );
        }
        Command::Run { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let run = run_pipeline(&cfg, exec)?;
            for s in &run.stages {
                eprintln!("{:10} {}", s.name, if s.cached { "cached" } else { "done" });
            }
            let s = &run.summary;
            eprintln!(
                "{} of {} topics beat the 1-time-lag baseline; mean overall gain {:.2}%",
                s.wins, s.scored, s.mean_overall_gain
            );
            eprintln!(
                "report: {}",
                Path::new(&cfg.output).join("report.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("tbasic: input error: --threads must be at least 1");
            return ExitCode::from(tbasic_cli::failure::EXIT_INPUT);
        }
        #[cfg(feature = "parallel")]
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };

    match dispatch(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tbasic: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
