use rand::Rng;
use serde::Serialize;

use super::config::{Algorithm, Sampling, StepSchedule, TrainConfig};
use super::{ball_project, noisy_gradient};
use crate::core_math::{all_finite, norm2, RngStream};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{
    clipped_gradient_sum, loss_and_accuracy_with, mean_gradient, per_example_gradients_with, Model,
    ModelSpec, ParamVector,
};
use crate::privacy::{compose_and_convert, default_orders, MechanismConfig, PrivacyLedger};
use crate::subspace::{
    project, random_projection_at, top_k_eigenspace_with, EigenOptions, Subspace,
};

/// Iterates kept for uniform sampling of the output iterate.
const RESERVOIR_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub steps_done: u64,
    pub train_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    /// `‖∇L̂(w)‖` over the private set.
    pub grad_norm: Option<f64>,
    /// `‖V̂V̂ᵀ ∇L̂(w)‖` for the projector in force at the end of the epoch.
    pub principal_grad_norm: Option<f64>,
    pub eigen_gap: Option<f64>,
    /// Cumulative projector refreshes.
    pub subspace_refreshes: usize,
    pub epsilon_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    /// Number of updates applied; 0 is the initial point.
    pub step: u64,
    pub params: ParamVector,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainResult {
    pub algorithm: Algorithm,
    pub steps: u64,
    pub final_params: ParamVector,
    /// Mean of the iterates `w_1, …, w_T`; the initial point when `T = 0`.
    pub averaged_params: ParamVector,
    pub epochs: Vec<EpochMetrics>,
    pub checkpoints: Vec<Checkpoint>,
    /// Uniform reservoir sample (size ≤ 64) of `w_1, …, w_T`.
    pub reservoir: Vec<Checkpoint>,
    /// Index into `reservoir` of the randomly selected output iterate.
    pub sampled_output: Option<usize>,
    pub subspace_refreshes: usize,
    /// Present whenever noise was added.
    pub ledger: Option<PrivacyLedger>,
    #[serde(skip)]
    pub last_subspace: Option<Subspace>,
}

impl TrainResult {
    /// The iterate `w_R` with `R` uniform over `1..=T`, if any step ran.
    pub fn sampled_iterate(&self) -> Option<&Checkpoint> {
        self.sampled_output.map(|i| &self.reservoir[i])
    }
}

/// Builds the model described by `spec` for the data, initialises it from
/// `spec.init_seed` and trains it.
pub fn train(
    config: &TrainConfig,
    spec: &ModelSpec,
    private: &Dataset,
    public: Option<&Dataset>,
    test: Option<&Dataset>,
) -> Result<TrainResult> {
    train_with(Exec::default(), config, spec, private, public, test)
}

pub fn train_with(
    exec: Exec,
    config: &TrainConfig,
    spec: &ModelSpec,
    private: &Dataset,
    public: Option<&Dataset>,
    test: Option<&Dataset>,
) -> Result<TrainResult> {
    let classes = [Some(private), public, test]
        .into_iter()
        .flatten()
        .map(Dataset::class_count)
        .max()
        .unwrap_or(2);
    let model = spec.build(private.feature_dim(), classes)?;
    let init = model.init_params(spec);
    train_from(exec, config, &model, &init, private, public, test)
}

/// Trains `model` starting from `init`.
pub fn train_from(
    exec: Exec,
    config: &TrainConfig,
    model: &Model,
    init: &ParamVector,
    private: &Dataset,
    public: Option<&Dataset>,
    test: Option<&Dataset>,
) -> Result<TrainResult> {
    let p = model.param_count();
    if init.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: init.len() });
    }
    let public = if config.algorithm == Algorithm::PdpSgd { public } else { None };
    config.validate(p, private.len(), public.map(Dataset::len))?;
    for ds in [Some(private), public, test].into_iter().flatten() {
        if ds.feature_dim() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                got: ds.feature_dim(),
            });
        }
    }

    let n = private.len();
    let spe = config.steps_per_epoch(n) as u64;
    let total = config.total_steps(n);
    let eta = match config.schedule {
        StepSchedule::Constant => config.step_size,
        StepSchedule::InvSqrtT => config.step_size / (total.max(1) as f64).sqrt(),
    };
    let noisy = config.algorithm != Algorithm::Sgd && config.sigma > 0.0;
    let sigma = if noisy { config.sigma } else { 0.0 };
    let clip = match config.algorithm {
        Algorithm::Sgd => None,
        _ => config.clip,
    };
    let q = config.sampling_ratio(n);
    let mech = |steps: u64| MechanismConfig {
        q,
        sigma,
        steps,
        delta: config.delta,
    };
    let orders = default_orders();
    let eig_opts = EigenOptions {
        route: config.eigen_route,
        exec,
        ..EigenOptions::default()
    };
    let projection_from = (config.projection_start_epoch as u64 - 1) * spe;

    let sample_rng = RngStream::new(config.seeds.subsample, "subsample");
    let noise_rng = RngStream::new(config.seeds.noise, "noise");
    let proj_rng = RngStream::new(config.seeds.projection, "projection");
    let reservoir_rng = RngStream::new(config.seeds.subsample, "reservoir");

    let mut w = init.clone();
    let mut avg = vec![0.0; p];
    let mut checkpoints = Vec::new();
    if config.checkpoint_every.is_some() {
        checkpoints.push(Checkpoint { step: 0, params: w.clone() });
    }
    let mut reservoir: Vec<Checkpoint> = Vec::new();
    let mut subspace: Option<Subspace> = None;
    let mut refreshes = 0usize;
    let mut epochs = Vec::with_capacity(config.epochs);
    let all_public: Vec<usize> = public.map(|d| (0..d.len()).collect()).unwrap_or_default();

    for t in 0..total {
        let indices = draw_batch(config, n, &sample_rng, t);
        let (sum, units) = if indices.is_empty() {
            (vec![0.0; p], 0)
        } else {
            clipped_gradient_sum(exec, model, &w, private, &indices, clip, config.micro_batch_size)?
        };
        let divisor = match config.sampling {
            Sampling::WithReplacement => units as f64,
            Sampling::Poisson => config.batch_size as f64 / config.micro_batch_size as f64,
        };
        let mut g = noisy_gradient(&sum, divisor, clip.unwrap_or(1.0), sigma, &noise_rng, t)?;

        if config.algorithm.is_projected() && t >= projection_from {
            if (t - projection_from).is_multiple_of(config.projection_update_every as u64) {
                let sub = match public {
                    Some(pubds) => {
                        let gb = per_example_gradients_with(exec, model, &w, pubds, &all_public)?;
                        top_k_eigenspace_with(&gb, config.projection_dim, &eig_opts)?
                    }
                    None => random_projection_at(p, config.projection_dim, &proj_rng, refreshes as u64)?,
                };
                let mut sub = sub;
                sub.step_created = t;
                subspace = Some(sub);
                refreshes += 1;
            }
            if let Some(sub) = &subspace {
                g = project(sub, &g)?;
            }
        }

        let mut next = w.values.clone();
        crate::core_math::axpy(-eta, &g, &mut next);
        w = w.with_values(next);
        if let Some(r) = config.ball_radius {
            w = ball_project(&w, r)?;
        }
        if !all_finite(&w.values) {
            return Err(Error::NonFinite(format!("iterate diverged at step {}", t + 1)));
        }

        let done = t + 1;
        let inv = 1.0 / done as f64;
        for (a, v) in avg.iter_mut().zip(&w.values) {
            *a += (v - *a) * inv;
        }
        if reservoir.len() < RESERVOIR_SIZE {
            reservoir.push(Checkpoint { step: done, params: w.clone() });
        } else {
            let j = reservoir_rng.at(done).random_range(0..done) as usize;
            if j < RESERVOIR_SIZE {
                reservoir[j] = Checkpoint { step: done, params: w.clone() };
            }
        }
        if let Some(every) = config.checkpoint_every {
            if done % every as u64 == 0 {
                checkpoints.push(Checkpoint { step: done, params: w.clone() });
            }
        }

        if done % spe == 0 {
            let epoch = (done / spe) as usize;
            let eps = if noisy {
                Some(compose_and_convert(&mech(done), &orders)?.epsilon)
            } else {
                None
            };
            epochs.push(epoch_metrics(
                exec, config, model, &w, private, test, subspace.as_ref(), epoch, done, refreshes, eps,
            )?);
        }
    }

    let ledger = if noisy {
        Some(compose_and_convert(&mech(total), &orders)?)
    } else {
        None
    };
    let sampled_output = (!reservoir.is_empty())
        .then(|| reservoir_rng.at(0).random_range(0..reservoir.len()));
    let averaged_params = if total == 0 { init.clone() } else { init.with_values(avg) };
    Ok(TrainResult {
        algorithm: config.algorithm,
        steps: total,
        final_params: w,
        averaged_params,
        epochs,
        checkpoints,
        reservoir,
        sampled_output,
        subspace_refreshes: refreshes,
        ledger,
        last_subspace: subspace,
    })
}

fn draw_batch(config: &TrainConfig, n: usize, rng: &RngStream, t: u64) -> Vec<usize> {
    let mut r = rng.at(t);
    match config.sampling {
        Sampling::WithReplacement => (0..config.batch_size).map(|_| r.random_range(0..n)).collect(),
        Sampling::Poisson => {
            let q = config.sampling_ratio(n);
            (0..n).filter(|_| r.random::<f64>() < q).collect()
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn epoch_metrics(
    exec: Exec,
    config: &TrainConfig,
    model: &Model,
    w: &ParamVector,
    private: &Dataset,
    test: Option<&Dataset>,
    subspace: Option<&Subspace>,
    epoch: usize,
    done: u64,
    refreshes: usize,
    epsilon_so_far: Option<f64>,
) -> Result<EpochMetrics> {
    let mut m = EpochMetrics {
        epoch,
        steps_done: done,
        train_loss: None,
        train_acc: None,
        test_loss: None,
        test_acc: None,
        grad_norm: None,
        principal_grad_norm: None,
        eigen_gap: subspace.and_then(Subspace::eigen_gap),
        subspace_refreshes: refreshes,
        epsilon_so_far,
    };
    if config.skip_epoch_metrics {
        return Ok(m);
    }
    let (loss, acc) = loss_and_accuracy_with(exec, model, w, private)?;
    m.train_loss = Some(loss);
    m.train_acc = Some(acc);
    if let Some(ts) = test {
        let (l, a) = loss_and_accuracy_with(exec, model, w, ts)?;
        m.test_loss = Some(l);
        m.test_acc = Some(a);
    }
    let (grad, _) = mean_gradient(model, w, private)?;
    m.grad_norm = Some(norm2(&grad));
    if let Some(sub) = subspace {
        m.principal_grad_norm = Some(norm2(&project(sub, &grad)?));
    }
    Ok(m)
}
