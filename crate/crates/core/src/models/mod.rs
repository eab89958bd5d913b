//! Differentiable models with exact per-example gradients and norm clipping.

mod gradients;
mod net;

pub use gradients::{
    clip_gradients, clipped_gradient_sum, group_micro_batches, mean_gradient,
    per_example_gradients, per_example_gradients_with, GradientBatch,
};
pub use net::Model;

use serde::{Deserialize, Serialize};

use crate::core_math::{all_finite, RngStream};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// Binary logistic regression.
    Logistic,
    SoftmaxLinear,
    /// ReLU network with one or two hidden layers and a softmax output.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// Hidden layer widths (MLP only).
    #[serde(default)]
    pub layer_widths: Vec<usize>,
    #[serde(default = "default_true")]
    pub bias: bool,
    /// Weights are drawn from N(0, (init_scale / √fan_in)²); biases start at zero.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_true() -> bool {
    true
}

fn default_init_scale() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn logistic() -> Self {
        Self {
            family: ModelFamily::Logistic,
            layer_widths: vec![],
            bias: true,
            init_scale: 0.0,
            init_seed: 0,
        }
    }

    pub fn softmax_linear() -> Self {
        Self {
            family: ModelFamily::SoftmaxLinear,
            ..Self::logistic()
        }
    }

    pub fn mlp(hidden: &[usize]) -> Self {
        Self {
            family: ModelFamily::Mlp,
            layer_widths: hidden.to_vec(),
            bias: true,
            init_scale: 1.0,
            init_seed: 0,
        }
    }

    /// Resolves the architecture against an input width and class count.
    pub fn build(&self, input_dim: usize, class_count: usize) -> Result<Model> {
        Model::new(self, input_dim, class_count)
    }
}

/// Flat model parameters plus the layout needed to rebuild tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub shape_map: Vec<(String, Vec<usize>)>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shape_map: Vec<(String, Vec<usize>)>) -> Result<Self> {
        let total: usize = shape_map.iter().map(|(_, d)| d.iter().product::<usize>()).sum();
        if total != values.len() {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: values.len(),
            });
        }
        if !all_finite(&values) {
            return Err(Error::NonFinite("parameter values".into()));
        }
        Ok(Self { values, shape_map })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            shape_map: self.shape_map.clone(),
        }
    }

    /// Slice of the named tensor.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let mut off = 0;
        for (n, dims) in &self.shape_map {
            let len: usize = dims.iter().product();
            if n == name {
                return Some(&self.values[off..off + len]);
            }
            off += len;
        }
        None
    }
}

impl Model {
    pub fn init_params(&self, spec: &ModelSpec) -> ParamVector {
        let mut rng = RngStream::new(spec.init_seed, "init").at(0);
        let mut values = Vec::with_capacity(self.param_count());
        for (name, dims) in self.shape_map() {
            let len: usize = dims.iter().product();
            if name.ends_with("weight") && spec.init_scale != 0.0 {
                let std = spec.init_scale / (*dims.last().unwrap() as f64).sqrt();
                values.extend((0..len).map(|_| std * crate::core_math::standard_normal(&mut rng)));
            } else {
                values.extend(std::iter::repeat_n(0.0, len));
            }
        }
        ParamVector {
            values,
            shape_map: self.shape_map(),
        }
    }
}

/// Mean cross-entropy and argmax accuracy over `ds`.
pub fn loss_and_accuracy(model: &Model, params: &ParamVector, ds: &Dataset) -> Result<(f64, f64)> {
    loss_and_accuracy_with(Exec::default(), model, params, ds)
}

pub fn loss_and_accuracy_with(
    exec: Exec,
    model: &Model,
    params: &ParamVector,
    ds: &Dataset,
) -> Result<(f64, f64)> {
    model.check(params, ds)?;
    let per: Vec<Result<(f64, bool)>> = exec.map(ds.len(), |i| {
        model
            .loss_and_prediction(&params.values, ds.x(i), ds.y(i))
            .map(|(l, pred)| (l, pred == ds.y(i)))
            .ok_or(Error::NonFiniteActivation { index: i })
    });
    let mut loss = 0.0;
    let mut correct = 0usize;
    for r in per {
        let (l, ok) = r?;
        loss += l;
        correct += usize::from(ok);
    }
    let n = ds.len() as f64;
    Ok((loss / n, correct as f64 / n))
}
