//! Datasets: IDX (MNIST-style) files, planted low-rank synthetic problems and
//! the public/private split.

mod idx;
mod split;
mod synthetic;

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use split::{split_indices, split_public_private, SplitSpec};
pub use synthetic::{synthetic_lowrank, SyntheticProblem, SyntheticSpec};

use crate::core_math::DenseMatrix;
use crate::error::{Error, Result};

/// Labelled examples; row `i` of `features` is example `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DenseMatrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::InvalidArgument("dataset must hold at least one example".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::CountMismatch {
                images: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Examples at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let f = self.feature_dim();
        let mut values = Vec::with_capacity(indices.len() * f);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            values.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(DenseMatrix::new(indices.len(), f, values)?, labels, self.class_count)
    }
}
