//! JSON configuration for `tbasic run`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbasic_core::engine::EvalTime;
use tbasic_core::features::KeywordMode;
use tbasic_core::time::Period;

use crate::failure::{Failure, Outcome};
use crate::timefmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSpec {
    pub from: String,
    pub to: String,
}

impl PeriodSpec {
    pub fn resolve(&self) -> Outcome<Period> {
        timefmt::period(&self.from, &self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermOptions {
    pub top: usize,
    pub min_total_count: u64,
    pub bin_hours: u32,
    /// Co-occurring terms listed for each ranked term.
    pub cooccur: usize,
}

impl Default for TermOptions {
    fn default() -> Self {
        TermOptions {
            top: 50,
            min_total_count: 10,
            bin_hours: 24,
            cooccur: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub folds: usize,
    /// Seeds fold assignment.
    pub seed: u64,
    /// Topic `i` balances its instances with `balance_seed + i`.
    pub balance_seed: u64,
    pub keyword_mode: KeywordMode,
    /// Shift the intercept from the balanced training ratio to the observed
    /// ratio of diffusion to non-diffusion candidates.
    pub prior_correction: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 1.0,
            folds: 5,
            seed: 0,
            balance_seed: 7,
            keyword_mode: KeywordMode::AllKeywords,
            prior_correction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationOptions {
    /// Seeds taken from the head of each observed activation sequence.
    pub seeds: usize,
    pub days: u32,
    pub runs: usize,
    pub rng_seed: u64,
    pub eval_time: EvalTime,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            seeds: 20,
            days: 10,
            runs: 100,
            rng_seed: 42,
            eval_time: EvalTime::Delivery,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationOptions {
    /// Topic ids to simulate and score; all topics when absent.
    pub topics: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub tweets: PathBuf,
    pub edges: PathBuf,
    pub topics: PathBuf,
    pub output: PathBuf,
    /// Profiles are built from this period.
    pub learning: PeriodSpec,
    /// Cascades, training instances and evaluation come from this period.
    pub test: PeriodSpec,
    #[serde(default)]
    pub terms: TermOptions,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub simulation: SimulationOptions,
    #[serde(default)]
    pub evaluation: EvaluationOptions,
}

impl PipelineConfig {
    /// Reads a config file. Relative paths in it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.tweets,
            &mut cfg.edges,
            &mut cfg.topics,
            &mut cfg.output,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Outcome<()> {
        let (learn, test) = self.periods()?;
        if learn.end > test.start {
            return Err(Failure::input(
                "the learning period must end before the test period starts",
            ));
        }
        let t = &self.training;
        if !(t.lambda >= 0.0 && t.lambda.is_finite()) {
            return Err(Failure::input(
                "training.lambda must be a non-negative number",
            ));
        }
        if t.folds < 2 {
            return Err(Failure::input("training.folds must be at least 2"));
        }
        let s = &self.simulation;
        if s.seeds == 0 || s.runs == 0 || s.days < 3 {
            return Err(Failure::input(
                "simulation needs seeds >= 1, runs >= 1 and days >= 3",
            ));
        }
        if self.terms.top == 0 {
            return Err(Failure::input("terms.top must be at least 1"));
        }
        Ok(())
    }

    pub fn periods(&self) -> Outcome<(Period, Period)> {
        Ok((self.learning.resolve()?, self.test.resolve()?))
    }
}
