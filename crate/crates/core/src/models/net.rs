use super::{ModelFamily, ModelSpec, ParamVector};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weight_offset: usize,
    /// Present when the model carries biases.
    bias_offset: Option<usize>,
}

/// A resolved architecture: fully connected layers with ReLU between them.
///
/// The logistic family has a single output logit; the others produce one logit
/// per class followed by a max-shifted softmax.
#[derive(Debug, Clone)]
pub struct Model {
    family: ModelFamily,
    layers: Vec<Layer>,
    input_dim: usize,
    class_count: usize,
    param_count: usize,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Model {
    pub(super) fn new(spec: &ModelSpec, input_dim: usize, class_count: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        if class_count < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        let (hidden, out) = match spec.family {
            ModelFamily::Logistic => {
                if class_count != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "logistic regression needs 2 classes, dataset has {class_count}"
                    )));
                }
                (vec![], 1)
            }
            ModelFamily::SoftmaxLinear => (vec![], class_count),
            ModelFamily::Mlp => {
                if spec.layer_widths.is_empty() || spec.layer_widths.len() > 2 {
                    return Err(Error::InvalidArgument(
                        "mlp needs one or two hidden layer widths".into(),
                    ));
                }
                (spec.layer_widths.clone(), class_count)
            }
        };
        if spec.family != ModelFamily::Mlp && !spec.layer_widths.is_empty() {
            return Err(Error::InvalidArgument(
                "layer_widths only apply to the mlp family".into(),
            ));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend(hidden);
        widths.push(out);
        let mut layers = Vec::new();
        let mut off = 0;
        for w in widths.windows(2) {
            let weight_offset = off;
            off += w[0] * w[1];
            let bias_offset = spec.bias.then(|| {
                let b = off;
                off += w[1];
                b
            });
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weight_offset,
                bias_offset,
            });
        }
        Ok(Self {
            family: spec.family,
            layers,
            input_dim,
            class_count,
            param_count: off,
        })
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn shape_map(&self) -> Vec<(String, Vec<usize>)> {
        let mut m = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            m.push((format!("layer{l}.weight"), vec![layer.outputs, layer.inputs]));
            if layer.bias_offset.is_some() {
                m.push((format!("layer{l}.bias"), vec![layer.outputs]));
            }
        }
        m
    }

    pub(crate) fn check(&self, params: &ParamVector, ds: &Dataset) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::DimensionMismatch {
                expected: self.param_count,
                got: params.len(),
            });
        }
        if ds.feature_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: ds.feature_dim(),
            });
        }
        if ds.class_count() > self.class_count {
            return Err(Error::InvalidArgument(format!(
                "dataset has {} classes, model {}",
                ds.class_count(),
                self.class_count
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer (last entry = output logits).
    fn forward(&self, w: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input: Vec<f64>;
            let a: &[f64] = if l == 0 {
                x
            } else {
                input = pre[l - 1].iter().map(|z| z.max(0.0)).collect();
                &input
            };
            let mut z = Vec::with_capacity(layer.outputs);
            for o in 0..layer.outputs {
                let row = &w[layer.weight_offset + o * layer.inputs..][..layer.inputs];
                let mut s: f64 = row.iter().zip(a).map(|(p, q)| p * q).sum();
                if let Some(b) = layer.bias_offset {
                    s += w[b + o];
                }
                z.push(s);
            }
            pre.push(z);
        }
        pre
    }

    /// Loss and output-layer error signal `∂loss/∂logits`.
    fn head(&self, logits: &[f64], y: usize) -> (f64, Vec<f64>, usize) {
        if self.family == ModelFamily::Logistic {
            let z = logits[0];
            let t = y as f64;
            let loss = softplus(z) - t * z;
            (loss, vec![sigmoid(z) - t], usize::from(z > 0.0))
        } else {
            let (arg, max) = logits
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let loss = sum.ln() + max - logits[y];
            let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
            delta[y] -= 1.0;
            (loss, delta, arg)
        }
    }

    /// Loss and predicted class; `None` on non-finite activations.
    pub fn loss_and_prediction(&self, w: &[f64], x: &[f64], y: usize) -> Option<(f64, usize)> {
        let pre = self.forward(w, x);
        let logits = pre.last().unwrap();
        if !logits.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (loss, _, pred) = self.head(logits, y);
        loss.is_finite().then_some((loss, pred))
    }

    /// Writes `∇ℓ(w; x, y)` into `out` and returns the loss; `None` on
    /// non-finite activations.
    pub fn example_gradient(&self, w: &[f64], x: &[f64], y: usize, out: &mut [f64]) -> Option<f64> {
        debug_assert_eq!(out.len(), self.param_count);
        let pre = self.forward(w, x);
        let logits = pre.last().unwrap();
        if !logits.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (loss, mut delta, _) = self.head(logits, y);
        if !loss.is_finite() {
            return None;
        }
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let act: Vec<f64>;
            let a: &[f64] = if l == 0 {
                x
            } else {
                act = pre[l - 1].iter().map(|z| z.max(0.0)).collect();
                &act
            };
            for (o, d) in delta.iter().enumerate() {
                let row = &mut out[layer.weight_offset + o * layer.inputs..][..layer.inputs];
                for (g, ai) in row.iter_mut().zip(a) {
                    *g = d * ai;
                }
                if let Some(b) = layer.bias_offset {
                    out[b + o] = *d;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &w[layer.weight_offset + o * layer.inputs..][..layer.inputs];
                    for (pv, wi) in prev.iter_mut().zip(row) {
                        *pv += d * wi;
                    }
                }
                for (pv, z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *pv = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Some(loss)
    }
}
