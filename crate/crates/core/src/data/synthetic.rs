use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::core_math::{dot, orthonormalize_columns, standard_normal, ColumnBlock, DenseMatrix, RngStream};
use crate::error::{Error, Result};
use rand::Rng;

/// Parameters of a planted low-rank classification problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub features: usize,
    pub n: usize,
    pub rank: usize,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default = "default_classes")]
    pub classes: usize,
    pub seed: u64,
}

fn default_classes() -> usize {
    2
}

/// A generated problem together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub dataset: Dataset,
    /// Orthonormal `features × rank` frame; every feature vector lies in its span.
    pub frame: ColumnBlock,
    /// Planted class weight vectors (one per class; a single vector for binary).
    pub planted: Vec<Vec<f64>>,
}

impl SyntheticProblem {
    /// Label assigned by the planted classifier (before noise).
    pub fn planted_label(&self, x: &[f64]) -> usize {
        planted_label(&self.planted, x)
    }
}

fn planted_label(planted: &[Vec<f64>], x: &[f64]) -> usize {
    if planted.len() == 1 {
        usize::from(dot(&planted[0], x) > 0.0)
    } else {
        planted
            .iter()
            .map(|w| dot(w, x))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, s)| if s > b.1 { (i, s) } else { b })
            .0
    }
}

/// Features `x = A·u` with `A` an orthonormal `features × rank` frame and
/// `u ~ N(0, I_rank)`; labels from a planted linear classifier in `span(A)`,
/// flipped to a uniformly chosen other class with probability `label_noise`.
pub fn synthetic_lowrank(spec: &SyntheticSpec) -> Result<SyntheticProblem> {
    let SyntheticSpec {
        features: p,
        n,
        rank,
        label_noise,
        classes,
        seed,
    } = *spec;
    if rank == 0 || rank > p {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} must lie in [1, {p}]"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if !(0.0..=1.0).contains(&label_noise) {
        return Err(Error::InvalidArgument(format!("label_noise {label_noise} outside [0, 1]")));
    }

    let mut frame_rng = RngStream::new(seed, "synthetic/frame").at(0);
    let raw: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..p).map(|_| standard_normal(&mut frame_rng)).collect())
        .collect();
    let frame = orthonormalize_columns(&ColumnBlock::from_columns(p, &raw)?);
    if frame.cols() != rank {
        return Err(Error::InvalidArgument("degenerate random frame".into()));
    }

    let mut plant_rng = RngStream::new(seed, "synthetic/planted").at(0);
    let n_planted = if classes == 2 { 1 } else { classes };
    let planted: Vec<Vec<f64>> = (0..n_planted)
        .map(|_| {
            let theta: Vec<f64> = (0..rank).map(|_| standard_normal(&mut plant_rng)).collect();
            frame.mul(&theta)
        })
        .collect();

    let example_stream = RngStream::new(seed, "synthetic/examples");
    let mut values = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = example_stream.at(i as u64);
        let u: Vec<f64> = (0..rank).map(|_| standard_normal(&mut r)).collect();
        let x = frame.mul(&u);
        let mut y = planted_label(&planted, &x);
        if label_noise > 0.0 && r.random::<f64>() < label_noise {
            let shift = 1 + r.random_range(0..classes - 1);
            y = (y + shift) % classes;
        }
        values.extend_from_slice(&x);
        labels.push(y);
    }
    let dataset = Dataset::new(DenseMatrix::new(n, p, values)?, labels, classes)?;
    Ok(SyntheticProblem {
        dataset,
        frame,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_math::symmetric_eigen;

    fn spec(p: usize, n: usize, rank: usize, noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            features: p,
            n,
            rank,
            label_noise: noise,
            classes: 2,
            seed: 17,
        }
    }

    fn covariance(ds: &Dataset) -> DenseMatrix {
        let f = ds.feature_dim();
        let mut c = DenseMatrix::zeros(f, f);
        for i in 0..ds.len() {
            let x = ds.x(i);
            for a in 0..f {
                for b in 0..f {
                    c.set(a, b, c.get(a, b) + x[a] * x[b] / ds.len() as f64);
                }
            }
        }
        c
    }

    #[test]
    fn energy_concentrates_in_rank() {
        let prob = synthetic_lowrank(&spec(500, 2000, 5, 0.0)).unwrap();
        let eig = symmetric_eigen(&covariance(&prob.dataset)).unwrap();
        let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
        let top: f64 = eig.values[..5].iter().sum();
        assert!(top / total >= 0.999, "{}", top / total);
    }

    #[test]
    fn full_rank_covariance_is_positive_definite() {
        let prob = synthetic_lowrank(&spec(8, 4000, 8, 0.0)).unwrap();
        let eig = symmetric_eigen(&covariance(&prob.dataset)).unwrap();
        assert!(*eig.values.last().unwrap() > 0.1);
    }

    #[test]
    fn planted_classifier_is_perfect_without_noise() {
        for classes in [2, 4] {
            let mut s = spec(40, 500, 3, 0.0);
            s.classes = classes;
            let prob = synthetic_lowrank(&s).unwrap();
            for i in 0..prob.dataset.len() {
                assert_eq!(prob.planted_label(prob.dataset.x(i)), prob.dataset.y(i));
            }
        }
    }

    #[test]
    fn label_noise_flips_about_the_requested_fraction() {
        let prob = synthetic_lowrank(&spec(20, 5000, 3, 0.2)).unwrap();
        let flips = (0..5000)
            .filter(|&i| prob.planted_label(prob.dataset.x(i)) != prob.dataset.y(i))
            .count() as f64
            / 5000.0;
        assert!((flips - 0.2).abs() < 0.03, "{flips}");
    }

    #[test]
    fn rank_above_dimension_rejected() {
        assert!(synthetic_lowrank(&spec(5, 10, 6, 0.0)).is_err());
    }
}
