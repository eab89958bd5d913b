use serde::Serialize;

use super::generator::{symmetric_norm, GradientGenerator};
use super::stats::{loglog_slope, mean_std, median, stderr};
use super::MIN_REPLICATES;
use crate::core_math::RngStream;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::subspace::second_moment_of;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub axis: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub stderr: f64,
    /// One value per replicate, in replicate order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub experiment: String,
    pub axis_name: String,
    pub replicates: usize,
    pub points: Vec<ScalingPoint>,
    /// Slope of `ln mean` against `ln axis`; present with three or more points.
    pub slope: Option<f64>,
    pub slope_band: Option<(f64, f64)>,
    /// Whether the slope falls in `slope_band`; absent without both.
    pub pass: Option<bool>,
}

impl ScalingReport {
    pub fn point(&self, axis: f64) -> Option<&ScalingPoint> {
        self.points.iter().find(|p| p.axis == axis)
    }
}

/// Estimates `E‖M − Σ‖₂` for each sample size in `m_values`, where
/// `M = (1/m) Σ g_i g_iᵀ` over `m` fresh draws, and fits the log-log slope.
pub fn concentration_experiment(
    generator: &dyn GradientGenerator,
    m_values: &[usize],
    reps: usize,
    seed: u64,
    slope_band: Option<(f64, f64)>,
    exec: Exec,
) -> Result<ScalingReport> {
    if reps < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "{reps} replicates, need at least {MIN_REPLICATES}"
        )));
    }
    if m_values.is_empty() || m_values.contains(&0) {
        return Err(Error::InvalidArgument("sample sizes must be positive".into()));
    }
    let sigma = generator.sigma();
    if sigma.max_abs() == 0.0 {
        return Err(Error::InvalidArgument("generator has zero second moment".into()));
    }
    let root = RngStream::new(seed, "concentration");
    let mut points = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let rng = root.child(m);
        let errs: Vec<Result<f64>> = exec.map(reps, |r| {
            let draws = generator.sample(&rng, r as u64, m);
            let mm = second_moment_of(&draws, usize::MAX)?;
            symmetric_norm(&mm.sub(&sigma)?)
        });
        let values = errs.into_iter().collect::<Result<Vec<f64>>>()?;
        let (mean, std) = mean_std(&values);
        points.push(ScalingPoint {
            axis: m as f64,
            mean,
            std,
            median: median(&values),
            stderr: stderr(&values),
            values,
        });
    }
    let slope = if points.len() >= 3 {
        let x: Vec<f64> = points.iter().map(|p| p.axis).collect();
        let y: Vec<f64> = points.iter().map(|p| p.mean).collect();
        Some(loglog_slope(&x, &y)?)
    } else {
        None
    };
    let pass = match (slope, slope_band) {
        (Some(s), Some((lo, hi))) => Some((lo..=hi).contains(&s)),
        _ => None,
    };
    Ok(ScalingReport {
        experiment: "concentration".into(),
        axis_name: "m".into(),
        replicates: reps,
        points,
        slope,
        slope_band,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_math::ColumnBlock;
    use crate::verify::{GaussianGenerator, PoolGenerator};

    fn gen() -> GaussianGenerator {
        GaussianGenerator::random_frame(30, vec![1.0, 0.5, 0.3, 0.2, 0.1], 2).unwrap()
    }

    #[test]
    fn single_axis_point_has_no_slope() {
        let r = concentration_experiment(&gen(), &[20], 6, 1, Some((-0.65, -0.35)), Exec::Sequential)
            .unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(r.slope.is_none() && r.pass.is_none());
        assert_eq!(r.points[0].values.len(), 6);
    }

    #[test]
    fn error_quadruples_when_gradients_double() {
        let g = gen();
        let a = concentration_experiment(&g, &[15, 40], 8, 3, None, Exec::Sequential).unwrap();
        let b = concentration_experiment(&g.scaled(2.0), &[15, 40], 8, 3, None, Exec::Sequential)
            .unwrap();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert!((pb.mean / pa.mean - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exec_modes_agree_bitwise() {
        let g = gen();
        let a = concentration_experiment(&g, &[10, 20, 40], 6, 9, None, Exec::Sequential).unwrap();
        let b = concentration_experiment(&g, &[10, 20, 40], 6, 9, None, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.slope.unwrap() < 0.0);
    }

    #[test]
    fn full_pool_reproduces_sigma() {
        // Taking the whole pool as the sample gives M = Σ exactly.
        let cols: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..6).map(|j| ((i * 7 + j * 3) as f64).sin()).collect())
            .collect();
        let pool = ColumnBlock::from_columns(6, &cols).unwrap();
        let g = PoolGenerator::new(pool.clone()).unwrap();
        let m = second_moment_of(&pool, 64).unwrap();
        assert!(symmetric_norm(&m.sub(&g.sigma()).unwrap()).unwrap() < 1e-14);
        let r = concentration_experiment(&g, &[50, 200, 800], 5, 0, None, Exec::Sequential).unwrap();
        assert!(r.points[2].mean < r.points[0].mean);
    }

    #[test]
    fn rotation_leaves_error_distribution_unchanged() {
        let l = vec![1.0, 0.6, 0.3];
        let a = GaussianGenerator::axis_aligned(20, l.clone()).unwrap();
        let b = GaussianGenerator::random_frame(20, l, 8).unwrap();
        let ra = concentration_experiment(&a, &[30], 60, 4, None, Exec::default()).unwrap();
        let rb = concentration_experiment(&b, &[30], 60, 5, None, Exec::default()).unwrap();
        let (pa, pb) = (&ra.points[0], &rb.points[0]);
        let se = (pa.stderr.powi(2) + pb.stderr.powi(2)).sqrt();
        assert!((pa.mean - pb.mean).abs() < 3.0 * se, "{} vs {}", pa.mean, pb.mean);
    }

    #[test]
    fn bad_inputs_rejected() {
        let g = gen();
        assert!(concentration_experiment(&g, &[10], 2, 0, None, Exec::Sequential).is_err());
        assert!(concentration_experiment(&g, &[0], 6, 0, None, Exec::Sequential).is_err());
        let zero = PoolGenerator::new(ColumnBlock::zeros(3, 4)).unwrap();
        assert!(concentration_experiment(&zero, &[5], 6, 0, None, Exec::Sequential).is_err());
    }
}
