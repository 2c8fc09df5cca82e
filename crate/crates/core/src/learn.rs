//! Logistic diffusion function and time-delay calibration.
//!
//! The diffusion probability of a pair is
//!
//! ```text
//! P(diffusion | F) = 1 / (1 + exp(w0 + Σ_a w_a F_a))
//! ```
//!
//! so a positive weight makes diffusion *less* likely. Weights are fitted by
//! maximizing the log-likelihood under an isotropic Gaussian prior on
//! `w_1..w_13` (the intercept is not penalized).

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::CandidateCounts;
use crate::corpus::UserProfile;
use crate::features::{activity, Example, FeatureVector, N_FEATURES};
use crate::par::{self, Execution};
use crate::{Error, Result};

/// Delay scale used before calibration, in hours.
pub const DEFAULT_SIGMA: f64 = 10.0;
/// Upper bound of the delay scale search, in hours.
pub const MAX_SIGMA: f64 = 24.0;
pub const SIGMA_GRID_STEP: f64 = 0.01;

/// Intercept followed by the 13 feature weights.
pub type Params = [f64; N_FEATURES + 1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub w0: f64,
    pub w: [f64; N_FEATURES],
    /// Maximum delay in hours, reached by a receiver with zero activity.
    pub sigma: f64,
    pub lambda: f64,
    pub trained_on: Option<String>,
    pub n_instances: usize,
}

impl DiffusionModel {
    pub fn new(w0: f64, w: [f64; N_FEATURES], sigma: f64) -> Self {
        DiffusionModel {
            w0,
            w,
            sigma,
            lambda: 0.0,
            trained_on: None,
            n_instances: 0,
        }
    }

    /// A model whose diffusion probability is `p` for every input.
    pub fn constant(p: f64, sigma: f64) -> Self {
        assert!(p > 0.0 && p < 1.0, "constant probability must be in (0, 1)");
        Self::new(((1.0 - p) / p).ln(), [0.0; N_FEATURES], sigma)
    }

    /// Re-targets a model fitted on balanced instances to the class ratio
    /// in `counts` by shifting the intercept by the log prior odds.
    pub fn correct_prior(&mut self, counts: &CandidateCounts) -> Result<()> {
        self.w0 += counts.log_odds()?;
        Ok(())
    }

    pub fn params(&self) -> Params {
        let mut p = [0.0; N_FEATURES + 1];
        p[0] = self.w0;
        p[1..].copy_from_slice(&self.w);
        p
    }

    fn from_params(p: &Params, sigma: f64) -> Self {
        let mut w = [0.0; N_FEATURES];
        w.copy_from_slice(&p[1..]);
        Self::new(p[0], w, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= MAX_SIGMA) {
            return Err(Error::Config(format!(
                "sigma {} is outside (0, 24]",
                self.sigma
            )));
        }
        if !self.w0.is_finite() || self.w.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("model weights must be finite".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_reader(BufReader::new(f))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

fn linear(p: &Params, f: &[f64; N_FEATURES]) -> f64 {
    p[0] + p[1..].iter().zip(f).map(|(w, x)| w * x).sum::<f64>()
}

/// `1 / (1 + exp(z))`, kept strictly inside (0, 1).
pub fn probability_from_linear(z: f64) -> f64 {
    let p = if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Diffusion probability of a feature vector under `model`.
pub fn predict_probability(model: &DiffusionModel, f: &FeatureVector) -> f64 {
    probability_from_linear(linear(&model.params(), &f.0))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const CHUNK: usize = 1024;

/// Penalized log-likelihood and its gradient with respect to
/// `[w0, w_1..w_13]`.
pub fn objective(
    params: &Params,
    examples: &[Example],
    lambda: f64,
    exec: Execution,
) -> (f64, Params) {
    let partials = par::map_chunks(exec, examples, CHUNK, |chunk| {
        let mut ll = 0.0;
        let mut g = [0.0; N_FEATURES + 1];
        for ex in chunk {
            let z = linear(params, &ex.features.0);
            let y = if ex.label.is_diffusion() { 1.0 } else { 0.0 };
            // ln P(diff) = -softplus(z), ln P(non) = -softplus(-z)
            ll -= y * softplus(z) + (1.0 - y) * softplus(-z);
            let r = probability_from_linear(z) - y;
            g[0] += r;
            for (ga, x) in g[1..].iter_mut().zip(&ex.features.0) {
                *ga += r * x;
            }
        }
        (ll, g)
    });
    let mut ll = 0.0;
    let mut g = [0.0; N_FEATURES + 1];
    for (pll, pg) in partials {
        ll += pll;
        for (a, b) in g.iter_mut().zip(pg) {
            *a += b;
        }
    }
    let w = &params[1..];
    ll -= 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>();
    for (ga, wa) in g[1..].iter_mut().zip(w) {
        *ga -= lambda * wa;
    }
    (ll, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lambda: f64,
    pub seed: u64,
    pub tolerance: f64,
    pub max_epochs: usize,
    pub exec: Execution,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lambda: 1.0,
            seed: 0,
            tolerance: 1e-8,
            max_epochs: 10_000,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub gradient_norm: f64,
    pub log_posterior: f64,
    pub converged: bool,
}

fn check_examples(examples: &[Example]) -> Result<()> {
    for (i, ex) in examples.iter().enumerate() {
        if ex.features.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
    }
    let pos = examples.iter().filter(|e| e.label.is_diffusion()).count();
    if pos == 0 || pos == examples.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

fn norm(v: &Params) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-batch gradient ascent with Barzilai-Borwein step lengths and an
/// Armijo backtracking safeguard. Starts from a small seeded perturbation of
/// zero; the objective is concave, so the optimum does not depend on it.
pub fn train(examples: &[Example], opts: &TrainOptions) -> Result<(DiffusionModel, TrainReport)> {
    check_examples(examples)?;
    if opts.lambda.is_nan() || opts.lambda < 0.0 {
        return Err(Error::Config(format!(
            "lambda must be >= 0, got {}",
            opts.lambda
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut theta: Params = [0.0; N_FEATURES + 1];
    for t in theta.iter_mut() {
        *t = rng.random_range(-0.01..0.01);
    }

    // Lipschitz bound of the gradient: 0.25 Σ (1 + |F|²) + λ
    let lipschitz = 0.25
        * examples
            .iter()
            .map(|e| 1.0 + e.features.0.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
        + opts.lambda;
    let mut step = 1.0 / lipschitz;

    let (mut f, mut g) = objective(&theta, examples, opts.lambda, opts.exec);
    let mut epochs = 0;
    let mut converged = false;
    while epochs < opts.max_epochs {
        let gn = norm(&g);
        if gn <= opts.tolerance {
            converged = true;
            break;
        }
        epochs += 1;
        let gg = gn * gn;
        let mut t = step;
        let (cand, fc, gc) = loop {
            let mut cand = theta;
            for (c, gi) in cand.iter_mut().zip(&g) {
                *c += t * gi;
            }
            let (fc, gc) = objective(&cand, examples, opts.lambda, opts.exec);
            if fc >= f + 1e-4 * t * gg {
                break (cand, fc, gc);
            }
            t *= 0.5;
            if t * gn < 1e-300 || t < 1e-16 / lipschitz {
                // no further ascent representable in floating point
                break (theta, f, g);
            }
        };
        if cand == theta {
            converged = true;
            break;
        }
        let mut ss = 0.0;
        let mut sy = 0.0;
        for k in 0..theta.len() {
            let s = cand[k] - theta[k];
            let y = g[k] - gc[k];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        theta = cand;
        f = fc;
        g = gc;
    }
    let gradient_norm = norm(&g);
    if !converged && gradient_norm <= opts.tolerance {
        converged = true;
    }
    let mut model = DiffusionModel::from_params(&theta, DEFAULT_SIGMA);
    model.lambda = opts.lambda;
    model.n_instances = examples.len();
    Ok((
        model,
        TrainReport {
            epochs,
            gradient_norm,
            log_posterior: f,
            converged,
        },
    ))
}

/// Fraction of examples classified correctly at threshold 0.5.
pub fn accuracy(model: &DiffusionModel, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let hits = examples
        .iter()
        .filter(|e| (predict_probability(model, &e.features) >= 0.5) == e.label.is_diffusion())
        .count();
    hits as f64 / examples.len() as f64
}

/// Stratified k-fold assignment: each class is shuffled (seeded) and dealt
/// round-robin over the folds.
pub fn stratified_folds(examples: &[Example], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; examples.len()];
    for (offset, class) in [true, false].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..examples.len())
            .filter(|&i| examples[i].label.is_diffusion() == class)
            .collect();
        rand::seq::SliceRandom::shuffle(members.as_mut_slice(), &mut rng);
        for (k, i) in members.into_iter().enumerate() {
            assignment[i] = (k + offset) % folds;
        }
    }
    assignment
}

/// Mean held-out accuracy over stratified folds.
pub fn cross_validate(examples: &[Example], folds: usize, opts: &TrainOptions) -> Result<f64> {
    if folds < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    if examples.len() < folds {
        return Err(Error::TooFewInstances {
            needed: folds,
            got: examples.len(),
        });
    }
    check_examples(examples)?;
    let assignment = stratified_folds(examples, folds, opts.seed);
    let scores = par::map_range(opts.exec, folds, |k| -> Result<f64> {
        let (train_set, test_set): (Vec<Example>, Vec<Example>) = {
            let mut tr = Vec::new();
            let mut te = Vec::new();
            for (e, &a) in examples.iter().zip(&assignment) {
                if a == k {
                    te.push(*e);
                } else {
                    tr.push(*e);
                }
            }
            (tr, te)
        };
        let (model, _) = train(&train_set, opts)?;
        Ok(accuracy(&model, &test_set))
    });
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / folds as f64)
}

/// `|w_a| / max_b |w_b|`, or all zeros when every weight is 0.
pub fn normalized_weights(model: &DiffusionModel) -> [f64; N_FEATURES] {
    let max = model.w.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max == 0.0 {
        return [0.0; N_FEATURES];
    }
    model.w.map(|w| w.abs() / max)
}

/// Delay before a sender's post reaches `dst`: `(1 - I(dst)) · sigma` hours.
pub fn estimate_delay(model: &DiffusionModel, dst: &UserProfile) -> f64 {
    (1.0 - activity(dst)) * model.sigma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaFit {
    /// Least-squares optimum clamped to the search range.
    pub sigma: f64,
    /// Best point of the 0.01-hour grid.
    pub grid_sigma: f64,
    /// Euclidean distance between observed and estimated delays at `sigma`.
    pub error: f64,
    pub n: usize,
}

fn delay_error(obs: &[(f64, f64)], sigma: f64) -> f64 {
    obs.iter()
        .map(|&(d, act)| {
            let r = d - (1.0 - act) * sigma;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Fits the delay scale to observed `(delay_hours, receiver_activity)` pairs
/// by minimizing the Euclidean distance between observed and estimated
/// delays over `(0, 24]`: a 0.01-hour grid search refined by the closed-form
/// least-squares value.
pub fn calibrate_sigma(observations: &[(f64, f64)], exec: Execution) -> Result<SigmaFit> {
    if observations.is_empty() {
        return Err(Error::NoDiffusion);
    }
    let (num, den) = observations
        .iter()
        .fold((0.0, 0.0), |(n, d), &(delay, act)| {
            let x = 1.0 - act;
            (n + delay * x, d + x * x)
        });
    if den == 0.0 {
        return Err(Error::UnidentifiableDelay);
    }
    let steps = (MAX_SIGMA / SIGMA_GRID_STEP).round() as usize;
    let errors = par::map_range(exec, steps, |k| {
        delay_error(observations, (k + 1) as f64 * SIGMA_GRID_STEP)
    });
    let best = errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let grid_sigma = (best + 1) as f64 * SIGMA_GRID_STEP;
    let sigma = (num / den).clamp(SIGMA_GRID_STEP, MAX_SIGMA);
    Ok(SigmaFit {
        sigma,
        grid_sigma,
        error: delay_error(observations, sigma),
        n: observations.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::Label;

    fn ex(f: [f64; N_FEATURES], diffusion: bool) -> Example {
        Example {
            features: FeatureVector(f),
            label: if diffusion {
                Label::Diffusion
            } else {
                Label::NonDiffusion
            },
        }
    }

    #[test]
    fn sigmoid_orientation() {
        let zero = DiffusionModel::new(0.0, [0.0; N_FEATURES], 10.0);
        assert_eq!(
            predict_probability(&zero, &FeatureVector([0.3; N_FEATURES])),
            0.5
        );
        let m = DiffusionModel::new(-2.0, [0.0; N_FEATURES], 10.0);
        let p = predict_probability(&m, &FeatureVector([0.0; N_FEATURES]));
        assert!((p - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.8808).abs() < 1e-4);

        let mut w = [0.0; N_FEATURES];
        w[3] = 1.5;
        let m = DiffusionModel::new(0.2, w, 10.0);
        let mut f = [0.2; N_FEATURES];
        let lo = predict_probability(&m, &FeatureVector(f));
        f[3] = 0.9;
        assert!(predict_probability(&m, &FeatureVector(f)) < lo);
    }

    #[test]
    fn saturates_inside_unit_interval() {
        for z in [-1e6, -800.0, -40.0, 40.0, 800.0, 1e6] {
            let p = probability_from_linear(z);
            assert!(p > 0.0 && p < 1.0, "z={z} p={p}");
        }
    }

    #[test]
    fn constant_model() {
        let m = DiffusionModel::constant(0.3, 1.0);
        let p = predict_probability(&m, &FeatureVector([0.7; N_FEATURES]));
        assert!((p - 0.3).abs() < 1e-12);
    }

    #[test]
    fn single_class_and_non_finite_rejected() {
        let only_pos = vec![ex([0.1; N_FEATURES], true); 4];
        assert!(matches!(
            train(&only_pos, &TrainOptions::default()),
            Err(Error::SingleClass)
        ));
        let mut data = vec![ex([0.1; N_FEATURES], true), ex([0.2; N_FEATURES], false)];
        data[1].features.0[4] = f64::NAN;
        assert!(matches!(
            train(&data, &TrainOptions::default()),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn heavy_prior_gives_base_rate() {
        let mut data = Vec::new();
        for i in 0..40 {
            let mut f = [0.0; N_FEATURES];
            f[0] = i as f64 / 40.0;
            data.push(ex(f, i >= 20));
        }
        let opts = TrainOptions {
            lambda: 1e9,
            ..Default::default()
        };
        let (m, _) = train(&data, &opts).unwrap();
        assert!(m.w.iter().all(|w| w.abs() < 1e-6));
        let p = predict_probability(&m, &data[0].features);
        assert!((p - 0.5).abs() < 1e-6);
    }

    #[test]
    fn normalized() {
        let mut w = [0.0; N_FEATURES];
        w[0] = 2.0;
        w[1] = -4.0;
        let n = normalized_weights(&DiffusionModel::new(0.0, w, 1.0));
        assert_eq!(n[0], 0.5);
        assert_eq!(n[1], 1.0);
        assert!(n[2..].iter().all(|&x| x == 0.0));
        let z = normalized_weights(&DiffusionModel::new(3.0, [0.0; N_FEATURES], 1.0));
        assert_eq!(z, [0.0; N_FEATURES]);
    }

    #[test]
    fn delays() {
        let m = DiffusionModel::new(0.0, [0.0; N_FEATURES], 10.0);
        let mut p = UserProfile::empty("u");
        assert_eq!(estimate_delay(&m, &p), 10.0);
        p.message_count = 2000;
        assert_eq!(estimate_delay(&m, &p), 0.0);
        p.message_count = (crate::features::ACTIVITY_SCALE / 2.0) as u64;
        let want = (1.0 - 364.0 / 729.6) * 10.0;
        assert!((estimate_delay(&m, &p) - want).abs() < 1e-12);
    }

    #[test]
    fn sigma_single_instance() {
        let fit = calibrate_sigma(&[(5.0, 0.5)], Execution::Sequential).unwrap();
        assert!((fit.sigma - 10.0).abs() < 1e-12);
        assert!((fit.grid_sigma - 10.0).abs() < 1e-9);
    }

    #[test]
    fn sigma_errors() {
        assert!(matches!(
            calibrate_sigma(&[], Execution::Sequential),
            Err(Error::NoDiffusion)
        ));
        assert!(matches!(
            calibrate_sigma(&[(3.0, 1.0), (1.0, 1.0)], Execution::Sequential),
            Err(Error::UnidentifiableDelay)
        ));
    }

    #[test]
    fn sigma_clamped_to_range() {
        let fit = calibrate_sigma(&[(100.0, 0.0)], Execution::Sequential).unwrap();
        assert_eq!(fit.sigma, 24.0);
        assert_eq!(fit.grid_sigma, 24.0);
        let fit = calibrate_sigma(&[(-3.0, 0.0)], Execution::Sequential).unwrap();
        assert_eq!(fit.sigma, 0.01);
    }

    #[test]
    fn prior_correction_rescales_odds() {
        let mut m = DiffusionModel::constant(0.5, 10.0);
        let counts = CandidateCounts {
            diffusion: 10,
            non_diffusion: 90,
        };
        m.correct_prior(&counts).unwrap();
        let p = predict_probability(&m, &FeatureVector([0.0; N_FEATURES]));
        assert!((p - 0.1).abs() < 1e-12);
        assert!(m.correct_prior(&CandidateCounts::default()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let mut w = [0.0; N_FEATURES];
        for (i, x) in w.iter_mut().enumerate() {
            *x = (i as f64 + 0.1).sqrt() * if i % 2 == 0 { -1.0 } else { 1.0 } / 7.0;
        }
        let mut m = DiffusionModel::new(0.1 + 0.2, w, 9.87654321);
        m.lambda = 1.0;
        m.trained_on = Some("nov".into());
        m.n_instances = 20_000;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let back = DiffusionModel::load(&p).unwrap();
        assert_eq!(
            back.params().map(f64::to_bits),
            m.params().map(f64::to_bits)
        );
        assert_eq!(back.sigma.to_bits(), m.sigma.to_bits());
        assert_eq!(back, m);
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        for key in ["w0", "w", "sigma", "lambda", "trained_on", "n_instances"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
