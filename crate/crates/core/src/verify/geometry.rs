use serde::Serialize;

use super::stats::{fit_power_law, mean_std};
use crate::core_math::{dot, gaussian_vector, ColumnBlock, RngStream};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{mean_gradient, per_example_gradients_with, Model};
use crate::optim::Checkpoint;
use crate::subspace::{project, spectrum_summary, SpectrumSummary, Subspace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceRow {
    pub step: u64,
    pub principal_energy: f64,
    pub residual_energy: f64,
    /// `‖residual‖² / ‖principal‖²`; missing when the principal part vanishes.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    /// Mean ratio over the checkpoints where it is defined.
    pub mean_ratio: Option<f64>,
}

/// Splits the full-data gradient at each checkpoint into its component in
/// `oracle[i]` and the residual, reporting the residual-to-principal energy.
pub fn principal_dominance(
    checkpoints: &[Checkpoint],
    oracle: &[Subspace],
    model: &Model,
    data: &Dataset,
) -> Result<DominanceReport> {
    if checkpoints.len() != oracle.len() {
        return Err(Error::DimensionMismatch {
            expected: checkpoints.len(),
            got: oracle.len(),
        });
    }
    let mut rows = Vec::with_capacity(checkpoints.len());
    for (c, sub) in checkpoints.iter().zip(oracle) {
        let (g, _) = mean_gradient(model, &c.params, data)?;
        let par = project(sub, &g)?;
        let principal_energy = dot(&par, &par);
        let residual_energy = g
            .iter()
            .zip(&par)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        let ratio = (principal_energy > 0.0).then(|| residual_energy / principal_energy);
        rows.push(DominanceRow {
            step: c.step,
            principal_energy,
            residual_energy,
            ratio,
        });
    }
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let mean_ratio = (!defined.is_empty()).then(|| mean_std(&defined).0);
    Ok(DominanceReport { rows, mean_ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub step: u64,
    pub summary: SpectrumSummary,
}

/// Leading eigenvalues of the public second moment at every checkpoint.
pub fn spectrum_trace(
    exec: Exec,
    checkpoints: &[Checkpoint],
    model: &Model,
    public: &Dataset,
    top: usize,
    k: usize,
) -> Result<Vec<SpectrumRow>> {
    if top == 0 || top > public.len() {
        return Err(Error::InvalidArgument(format!(
            "top = {top} must lie in [1, public size = {}]",
            public.len()
        )));
    }
    let all: Vec<usize> = (0..public.len()).collect();
    checkpoints
        .iter()
        .map(|c| {
            let gb = per_example_gradients_with(exec, model, &c.params, public, &all)?;
            Ok(SpectrumRow {
                step: c.step,
                summary: spectrum_summary(&gb, top, k)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientGeometry {
    /// `|m(j)|` in descending order.
    pub sorted_abs_coordinates: Vec<f64>,
    /// `(c, exponent)` of `|m(j)| ≈ c · j^(−exponent)`.
    pub decay_fit: (f64, f64),
    pub top_spectrum: Vec<f64>,
    pub gaussian_width_estimate: Option<f64>,
}

/// Sorted coordinate magnitudes of a gradient and their power-law decay.
pub fn coordinate_decay(gradient: &[f64]) -> Result<GradientGeometry> {
    if gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mut sorted: Vec<f64> = gradient.iter().map(|v| v.abs()).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.first().is_none_or(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("zero gradient has no decay profile".into()));
    }
    let decay_fit = if sorted.iter().filter(|v| **v > 0.0).count() < 2 {
        (sorted[0], f64::INFINITY)
    } else {
        fit_power_law(&sorted)?
    };
    Ok(GradientGeometry {
        sorted_abs_coordinates: sorted,
        decay_fit,
        top_spectrum: Vec::new(),
        gaussian_width_estimate: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub draws: usize,
}

/// Monte Carlo estimate of `E_v[max_i ⟨m_i, v⟩]` over standard Gaussian `v`.
pub fn gaussian_width_estimate(
    points: &ColumnBlock,
    draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<WidthEstimate> {
    if points.cols() == 0 {
        return Err(Error::InvalidArgument("no points".into()));
    }
    if draws < 100 {
        return Err(Error::InvalidArgument(format!("{draws} draws, need at least 100")));
    }
    let rng = RngStream::new(seed, "gaussian_width");
    let sups: Vec<Result<f64>> = exec.map(draws, |d| {
        let v = gaussian_vector(&rng, d as u64, points.rows(), 1.0)?;
        Ok(points.columns().map(|m| dot(m, &v)).fold(f64::NEG_INFINITY, f64::max))
    });
    let sups = sups.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&sups);
    Ok(WidthEstimate {
        mean,
        stderr: std / (draws as f64).sqrt(),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_lowrank, SyntheticSpec};
    use crate::models::ModelSpec;
    use crate::optim::{train, Algorithm, TrainConfig};
    use crate::subspace::top_k_eigenspace;

    fn e1(p: usize, sign: f64) -> Vec<f64> {
        let mut v = vec![0.0; p];
        v[0] = sign;
        v
    }

    #[test]
    fn width_of_symmetric_pair() {
        let pts = ColumnBlock::from_columns(5, &[e1(5, 1.0), e1(5, -1.0)]).unwrap();
        let w = gaussian_width_estimate(&pts, 4000, 1, Exec::default()).unwrap();
        let truth = (2.0 / std::f64::consts::PI).sqrt();
        assert!((w.mean - truth).abs() < 3.0 * w.stderr, "{} ± {}", w.mean, w.stderr);
    }

    #[test]
    fn width_of_single_point_is_centered() {
        let pts = ColumnBlock::from_columns(3, &[vec![0.3, -1.0, 2.0]]).unwrap();
        let w = gaussian_width_estimate(&pts, 2000, 2, Exec::default()).unwrap();
        assert!(w.mean.abs() < 3.0 * w.stderr);
    }

    #[test]
    fn width_is_homogeneous_and_monotone() {
        let cols = vec![vec![1.0, 0.2, 0.0], vec![-0.5, 1.0, 0.3], vec![0.0, -0.7, 0.9]];
        let s = ColumnBlock::from_columns(3, &cols[..2]).unwrap();
        let s3: Vec<Vec<f64>> = cols[..2].iter().map(|c| c.iter().map(|v| 3.0 * v).collect()).collect();
        let a = gaussian_width_estimate(&s, 500, 3, Exec::default()).unwrap();
        let b = gaussian_width_estimate(&ColumnBlock::from_columns(3, &s3).unwrap(), 500, 3, Exec::default())
            .unwrap();
        assert!((b.mean - 3.0 * a.mean).abs() < 1e-12);
        let u = gaussian_width_estimate(&ColumnBlock::from_columns(3, &cols).unwrap(), 500, 3, Exec::default())
            .unwrap();
        // Same draws, larger set: the supremum can only grow.
        assert!(u.mean >= a.mean);
        assert!(gaussian_width_estimate(&s, 99, 3, Exec::default()).is_err());
    }

    #[test]
    fn planted_decay_profiles() {
        let g: Vec<f64> = (1..=200).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / (j as f64).sqrt()).collect();
        let geo = coordinate_decay(&g).unwrap();
        assert!((geo.decay_fit.1 - 0.5).abs() < 1e-6);
        assert!(geo.sorted_abs_coordinates.windows(2).all(|w| w[0] >= w[1]));
        let flat = coordinate_decay(&[0.4; 10]).unwrap();
        assert!(flat.decay_fit.1.abs() < 1e-12);
        assert!(coordinate_decay(&[0.0; 4]).is_err());
    }

    fn rank_k_run() -> (Model, Dataset, crate::optim::TrainResult) {
        let ds = synthetic_lowrank(&SyntheticSpec {
            features: 15,
            n: 300,
            rank: 3,
            label_noise: 0.05,
            classes: 2,
            seed: 4,
        })
        .unwrap()
        .dataset;
        let mut spec = ModelSpec::logistic();
        spec.bias = false;
        let model = spec.build(15, 2).unwrap();
        let mut cfg = TrainConfig::new(Algorithm::Sgd, 3, 20, 0.5);
        cfg.checkpoint_every = Some(10);
        cfg.skip_epoch_metrics = true;
        let run = train(&cfg, &spec, &ds, None, None).unwrap();
        (model, ds, run)
    }

    #[test]
    fn rank_k_gradients_are_fully_principal() {
        let (model, ds, run) = rank_k_run();
        let all: Vec<usize> = (0..ds.len()).collect();
        let oracle: Vec<Subspace> = run
            .checkpoints
            .iter()
            .map(|c| {
                let gb = per_example_gradients_with(Exec::default(), &model, &c.params, &ds, &all).unwrap();
                top_k_eigenspace(&gb, 3).unwrap()
            })
            .collect();
        let rep = principal_dominance(&run.checkpoints, &oracle, &model, &ds).unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio.unwrap() < 1e-6));
        let full = vec![Subspace::complete(15); run.checkpoints.len()];
        let rep = principal_dominance(&run.checkpoints, &full, &model, &ds).unwrap();
        assert!(rep.rows.iter().all(|r| r.residual_energy == 0.0));
        assert!(principal_dominance(&run.checkpoints, &full[1..], &model, &ds).is_err());
    }

    #[test]
    fn spectrum_of_rank_k_gradients() {
        let (model, ds, run) = rank_k_run();
        let public = ds.subset(&(0..40).collect::<Vec<_>>()).unwrap();
        let rows = spectrum_trace(Exec::default(), &run.checkpoints, &model, &public, 10, 3).unwrap();
        assert_eq!(rows.len(), run.checkpoints.len());
        for r in &rows {
            let ev = &r.summary.top_eigenvalues;
            assert!(ev.windows(2).all(|w| w[0] >= w[1]));
            assert!(ev[3..].iter().all(|v| v.abs() < 1e-10 * ev[0].max(1.0)));
            let sum: f64 = ev.iter().sum();
            assert!((sum - r.summary.trace).abs() <= 1e-8 * r.summary.trace);
        }
        assert!(spectrum_trace(Exec::default(), &run.checkpoints, &model, &public, 41, 3).is_err());
    }
}
