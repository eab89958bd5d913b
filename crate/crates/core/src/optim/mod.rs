//! SGD, DP-SGD, projected DP-SGD (public eigenspace) and randomly projected
//! DP-SGD, with projection scheduling and an optional norm-ball constraint.

mod config;
mod train;

pub use config::{Algorithm, Sampling, Seeds, StepSchedule, TrainConfig};
pub use train::{train, train_from, train_with, Checkpoint, EpochMetrics, TrainResult};

use crate::core_math::{gaussian_vector, norm2, RngStream};
use crate::error::{Error, Result};
use crate::models::{GradientBatch, ParamVector};
use crate::subspace::{project, Subspace};

/// Noisy mean gradient `(Σ columns + N(0, σ²C² I)) / units`.
///
/// The noise for step `step` is always drawn from draw `step` of `noise`,
/// whatever happens to it afterwards.
pub(crate) fn noisy_gradient(
    sum: &[f64],
    units: f64,
    clip: f64,
    sigma: f64,
    noise: &RngStream,
    step: u64,
) -> Result<Vec<f64>> {
    let mut g = sum.to_vec();
    if sigma > 0.0 {
        let b = gaussian_vector(noise, step, sum.len(), sigma * clip)?;
        crate::core_math::axpy(1.0, &b, &mut g);
    }
    let inv = 1.0 / units;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok(g)
}

fn check_clipped(clipped: &GradientBatch, clip: f64, sigma: f64, params: &ParamVector) -> Result<()> {
    if clipped.dim() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: clipped.dim(),
        });
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} must be non-negative")));
    }
    if sigma > 0.0 && clipped.clip_bound() != Some(clip) {
        return Err(Error::InvalidArgument(
            "noisy steps need a batch clipped to the stated bound".into(),
        ));
    }
    Ok(())
}

fn descend(params: &ParamVector, dir: &[f64], eta: f64) -> ParamVector {
    let mut w = params.values.clone();
    crate::core_math::axpy(-eta, dir, &mut w);
    params.with_values(w)
}

/// One DP-SGD update: `w − η (Σ g_i + N(0, σ²C²I)) / |B|`.
pub fn dp_step(
    params: &ParamVector,
    clipped: &GradientBatch,
    clip: f64,
    sigma: f64,
    eta: f64,
    noise: &RngStream,
    step: u64,
) -> Result<ParamVector> {
    check_clipped(clipped, clip, sigma, params)?;
    let g = noisy_gradient(&clipped.column_sum(), clipped.count() as f64, clip, sigma, noise, step)?;
    Ok(descend(params, &g, eta))
}

/// One projected DP-SGD update: the DP-SGD noisy gradient (same noise draw)
/// projected onto `sub` before the step.
#[allow(clippy::too_many_arguments)]
pub fn pdp_step(
    params: &ParamVector,
    clipped: &GradientBatch,
    sub: &Subspace,
    clip: f64,
    sigma: f64,
    eta: f64,
    noise: &RngStream,
    step: u64,
) -> Result<ParamVector> {
    check_clipped(clipped, clip, sigma, params)?;
    if sub.dim() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: sub.dim(),
        });
    }
    let g = noisy_gradient(&clipped.column_sum(), clipped.count() as f64, clip, sigma, noise, step)?;
    Ok(descend(params, &project(sub, &g)?, eta))
}

/// Radial projection onto `{w : ‖w‖₂ ≤ radius}`.
pub fn ball_project(w: &ParamVector, radius: f64) -> Result<ParamVector> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("ball radius {radius} must be positive")));
    }
    let n = norm2(&w.values);
    if n <= radius {
        return Ok(w.clone());
    }
    let s = radius / n;
    Ok(w.with_values(w.values.iter().map(|v| v * s).collect()))
}
