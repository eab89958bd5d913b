use serde::Serialize;

use super::generator::{symmetric_norm, GaussianGenerator, GradientGenerator};
use super::stats::median;
use super::MIN_REPLICATES;
use crate::core_math::RngStream;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::GradientBatch;
use crate::subspace::{second_moment_of, subspace_distance, top_k_eigenspace_with, EigenOptions};

/// Slack for rounding when comparing a distance with its bound.
const BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DavisKahanRow {
    pub m: usize,
    pub replicate: usize,
    pub distance: f64,
    pub error_norm: f64,
    pub bound: f64,
    /// `‖M − Σ‖₂ ≤ α/2`, the regime where the bound is guaranteed.
    pub conditional: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DavisKahanReport {
    pub k: usize,
    pub gap: f64,
    pub m_values: Vec<usize>,
    pub rows: Vec<DavisKahanRow>,
    /// Median subspace distance per entry of `m_values`.
    pub median_distance: Vec<f64>,
    /// `median(m_i) / median(m_{i+1})` for consecutive sample sizes.
    pub median_ratios: Vec<f64>,
    pub conditional_count: usize,
    /// Replicates in the guaranteed regime whose distance exceeds `2‖M − Σ‖₂/α`.
    pub violations: usize,
}

/// For each `m` and replicate, estimates the top-`k` subspace from `m` draws
/// and compares its distance to the true subspace with `2‖M − Σ‖₂ / α`.
/// `‖M − Σ‖₂` is computed by a full eigen-decomposition so the bound is never
/// understated.
pub fn davis_kahan_check(
    generator: &GaussianGenerator,
    k: usize,
    m_values: &[usize],
    reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<DavisKahanReport> {
    if reps < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "{reps} replicates, need at least {MIN_REPLICATES}"
        )));
    }
    let truth = generator.top_subspace(k)?;
    let gap = generator.gap(k);
    if !(gap > 0.0) {
        return Err(Error::InvalidArgument(format!("eigen-gap at k = {k} is zero")));
    }
    if m_values.iter().any(|&m| m < k) {
        return Err(Error::InvalidArgument(format!("every sample size must be at least k = {k}")));
    }
    let sigma = generator.sigma();
    let opts = EigenOptions {
        exec: Exec::Sequential,
        ..EigenOptions::default()
    };
    let root = RngStream::new(seed, "davis_kahan");
    let mut rows = Vec::with_capacity(m_values.len() * reps);
    let mut median_distance = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let rng = root.child(m);
        let out: Vec<Result<DavisKahanRow>> = exec.map(reps, |r| {
            let draws = generator.sample(&rng, r as u64, m);
            let error_norm = symmetric_norm(&second_moment_of(&draws, usize::MAX)?.sub(&sigma)?)?;
            let est = top_k_eigenspace_with(&GradientBatch::unclipped(draws), k, &opts)?;
            let distance = subspace_distance(&est, &truth)?;
            let bound = 2.0 * error_norm / gap;
            let conditional = error_norm <= gap / 2.0;
            Ok(DavisKahanRow {
                m,
                replicate: r,
                distance,
                error_norm,
                bound,
                conditional,
                satisfied: distance <= bound + BOUND_SLACK,
            })
        });
        let block = out.into_iter().collect::<Result<Vec<_>>>()?;
        median_distance.push(median(&block.iter().map(|r| r.distance).collect::<Vec<_>>()));
        rows.extend(block);
    }
    let median_ratios = median_distance.windows(2).map(|w| w[0] / w[1]).collect();
    let conditional_count = rows.iter().filter(|r| r.conditional).count();
    let violations = rows.iter().filter(|r| r.conditional && !r.satisfied).count();
    Ok(DavisKahanReport {
        k,
        gap,
        m_values: m_values.to_vec(),
        rows,
        median_distance,
        median_ratios,
        conditional_count,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_violations_on_diagonal_spectrum() {
        // p = 100, k = 5, unit gap.
        let g = GaussianGenerator::axis_aligned(100, vec![1.5, 1.4, 1.3, 1.2, 1.1, 0.1, 0.05])
            .unwrap();
        let r = davis_kahan_check(&g, 5, &[200], 200, 1, Exec::default()).unwrap();
        assert!((r.gap - 1.0).abs() < 1e-12);
        assert_eq!(r.violations, 0);
        assert!(r.conditional_count > 100, "{}", r.conditional_count);
        assert_eq!(r.rows.len(), 200);
    }

    #[test]
    fn dominant_block_is_recovered_quickly() {
        let mut l = vec![1.0; 4];
        l.extend([1e-7, 1e-7]);
        let g = GaussianGenerator::random_frame(40, l, 3).unwrap();
        let r = davis_kahan_check(&g, 4, &[16], 10, 2, Exec::Sequential).unwrap();
        assert!(r.rows.iter().all(|x| x.distance < 1e-2));
    }

    #[test]
    fn distance_shrinks_with_more_samples() {
        let g = GaussianGenerator::random_frame(60, vec![1.5, 1.3, 1.1, 0.1, 0.05], 6).unwrap();
        let r = davis_kahan_check(&g, 3, &[25, 100], 20, 4, Exec::default()).unwrap();
        assert!(r.median_ratios[0] > 1.3, "{:?}", r.median_ratios);
    }

    #[test]
    fn zero_gap_rejected() {
        let g = GaussianGenerator::axis_aligned(10, vec![1.0, 1.0]).unwrap();
        assert!(davis_kahan_check(&g, 1, &[10], 5, 0, Exec::Sequential).is_err());
        assert!(davis_kahan_check(&g, 2, &[1], 5, 0, Exec::Sequential).is_err());
    }
}
