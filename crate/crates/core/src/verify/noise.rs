use serde::Serialize;

use crate::core_math::{dot, gaussian_vector, RngStream};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::subspace::{project, random_projection};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseReductionReport {
    pub p: usize,
    pub k: usize,
    pub draws: usize,
    pub full_energy_mean: f64,
    pub projected_energy_mean: f64,
    /// `E‖V Vᵀ b‖² / E‖b‖²`.
    pub ratio: f64,
    /// `k / p`.
    pub expected: f64,
    pub relative_error: f64,
}

/// Compares the energy of isotropic Gaussian noise before and after
/// projection onto a fixed `k`-dimensional subspace.
pub fn noise_reduction(p: usize, k: usize, draws: usize, seed: u64, exec: Exec) -> Result<NoiseReductionReport> {
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let sub = random_projection(p, k, seed)?;
    let rng = RngStream::new(seed, "noise_reduction");
    let per: Vec<Result<(f64, f64)>> = exec.map(draws, |d| {
        let b = gaussian_vector(&rng, d as u64, p, 1.0)?;
        let pb = project(&sub, &b)?;
        Ok((dot(&b, &b), dot(&pb, &pb)))
    });
    let (mut full, mut proj) = (0.0, 0.0);
    for r in per {
        let (f, q) = r?;
        full += f;
        proj += q;
    }
    let n = draws as f64;
    let ratio = proj / full;
    let expected = k as f64 / p as f64;
    Ok(NoiseReductionReport {
        p,
        k,
        draws,
        full_energy_mean: full / n,
        projected_energy_mean: proj / n,
        ratio,
        expected,
        relative_error: (ratio / expected - 1.0).abs(),
    })
}
