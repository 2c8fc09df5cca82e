//! Error metrics for predicted volume curves and the 1-time-lag baseline.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check(p: &[f64], r: &[f64], min_len: usize) -> Result<()> {
    if p.len() != r.len() {
        return Err(Error::LengthMismatch(p.len(), r.len()));
    }
    if r.len() < min_len {
        return Err(Error::SeriesTooShort {
            needed: min_len,
            got: r.len(),
        });
    }
    Ok(())
}

fn norm(r: &[f64]) -> Result<f64> {
    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(n)
}

/// `‖P − R‖₂ / ‖R‖₂`.
pub fn volume_error(predicted: &[f64], real: &[f64]) -> Result<f64> {
    check(predicted, real, 1)?;
    let r = norm(real)?;
    let d = predicted
        .iter()
        .zip(real)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        .sqrt();
    Ok(d / r)
}

/// Central difference `(x[t+1] − x[t−1]) / 2` at interior points.
pub fn central_difference(x: &[f64]) -> Vec<f64> {
    x.windows(3).map(|w| (w[2] - w[0]) / 2.0).collect()
}

/// Distance between the central differences of `P` and `R` over interior
/// points, relative to `‖R‖₂`.
pub fn dynamics_error(predicted: &[f64], real: &[f64]) -> Result<f64> {
    check(predicted, real, 3)?;
    let r = norm(real)?;
    let d = central_difference(real)
        .iter()
        .zip(central_difference(predicted))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(d / r)
}

/// The previous day's observed value, `P'(t) = R(t − 1)` for `t = 2..T`.
/// The returned series is aligned with `real[1..]`.
pub fn one_time_lag(real: &[f64]) -> Result<Vec<f64>> {
    if real.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: real.len(),
        });
    }
    Ok(real[..real.len() - 1].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// Percent reduction of the volume error.
    pub volume: f64,
    /// Percent reduction of the dynamics error.
    pub dynamics: f64,
    /// Mean of the two reductions.
    pub overall: f64,
}

/// Percent error reduction of a model over the baseline on each aspect, and
/// their mean.
pub fn reduction_and_gain(
    model_volume: f64,
    base_volume: f64,
    model_dynamics: f64,
    base_dynamics: f64,
) -> Result<Reduction> {
    if base_volume <= 0.0 || base_dynamics <= 0.0 {
        return Err(Error::ZeroBaseline);
    }
    let volume = 100.0 * (base_volume - model_volume) / base_volume;
    let dynamics = 100.0 * (base_dynamics - model_dynamics) / base_dynamics;
    Ok(Reduction {
        volume,
        dynamics,
        overall: (volume + dynamics) / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model_volume_error: f64,
    pub model_dynamics_error: f64,
    pub baseline_volume_error: f64,
    pub baseline_dynamics_error: f64,
    pub reduction_volume: f64,
    pub reduction_dynamics: f64,
    pub overall_gain: f64,
}

/// Scores `predicted` and the 1-time-lag baseline against `real`, both over
/// days `2..T` so the two predictors share the same support.
pub fn compare_with_baseline(predicted: &[f64], real: &[f64]) -> Result<Report> {
    check(predicted, real, 4)?;
    let base = one_time_lag(real)?;
    let r = &real[1..];
    let p = &predicted[1..];
    let model_volume_error = volume_error(p, r)?;
    let model_dynamics_error = dynamics_error(p, r)?;
    let baseline_volume_error = volume_error(&base, r)?;
    let baseline_dynamics_error = dynamics_error(&base, r)?;
    let red = reduction_and_gain(
        model_volume_error,
        baseline_volume_error,
        model_dynamics_error,
        baseline_dynamics_error,
    )?;
    Ok(Report {
        model_volume_error,
        model_dynamics_error,
        baseline_volume_error,
        baseline_dynamics_error,
        reduction_volume: red.volume,
        reduction_dynamics: red.dynamics,
        overall_gain: red.overall,
    })
}
