use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::EigenRoute;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    DpSgd,
    PdpSgd,
    RpdpSgd,
}

impl Algorithm {
    pub fn is_projected(self) -> bool {
        matches!(self, Algorithm::PdpSgd | Algorithm::RpdpSgd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::DpSgd => "dp_sgd",
            Algorithm::PdpSgd => "pdp_sgd",
            Algorithm::RpdpSgd => "rpdp_sgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    Constant,
    /// `η_t = step_size / √T`.
    InvSqrtT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// `|B|` indices drawn uniformly with replacement.
    WithReplacement,
    /// Each example joins independently with probability `|B|/n`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub subsample: u64,
    #[serde(default = "one")]
    pub noise: u64,
    #[serde(default = "two")]
    pub projection: u64,
}

fn one() -> u64 {
    1
}
fn two() -> u64 {
    2
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            subsample: 0,
            noise: 1,
            projection: 2,
        }
    }
}

impl Seeds {
    /// Offsets every seed, used for repeated runs.
    pub fn offset(self, by: u64) -> Self {
        Self {
            subsample: self.subsample.wrapping_add(by),
            noise: self.noise.wrapping_add(by),
            projection: self.projection.wrapping_add(by),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    #[serde(default = "default_schedule")]
    pub schedule: StepSchedule,
    /// Per-example (or per micro-batch) clipping bound; required when `sigma > 0`.
    #[serde(default)]
    pub clip: Option<f64>,
    /// Noise multiplier relative to `clip`.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Projection dimension `k`.
    #[serde(default)]
    pub projection_dim: usize,
    /// Recompute the projector every `s` steps.
    #[serde(default = "default_one")]
    pub projection_update_every: usize,
    /// 1-based epoch from which projection is applied; earlier epochs run DP-SGD.
    #[serde(default = "default_one")]
    pub projection_start_epoch: usize,
    #[serde(default = "default_one")]
    pub micro_batch_size: usize,
    #[serde(default)]
    pub ball_radius: Option<f64>,
    #[serde(default = "default_sampling")]
    pub sampling: Sampling,
    #[serde(default)]
    pub seeds: Seeds,
    /// Store the iterate every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    #[serde(default = "default_route")]
    pub eigen_route: EigenRoute,
    /// Skip the per-epoch full-data loss and gradient evaluation.
    #[serde(default)]
    pub skip_epoch_metrics: bool,
}

fn default_schedule() -> StepSchedule {
    StepSchedule::Constant
}
fn default_delta() -> f64 {
    1e-5
}
fn default_one() -> usize {
    1
}
fn default_sampling() -> Sampling {
    Sampling::WithReplacement
}
fn default_route() -> EigenRoute {
    EigenRoute::Auto
}

impl TrainConfig {
    /// A configuration with defaults for everything but the essentials.
    pub fn new(algorithm: Algorithm, epochs: usize, batch_size: usize, step_size: f64) -> Self {
        Self {
            algorithm,
            epochs,
            batch_size,
            step_size,
            schedule: StepSchedule::Constant,
            clip: None,
            sigma: 0.0,
            delta: 1e-5,
            projection_dim: 0,
            projection_update_every: 1,
            projection_start_epoch: 1,
            micro_batch_size: 1,
            ball_radius: None,
            sampling: Sampling::WithReplacement,
            seeds: Seeds::default(),
            checkpoint_every: None,
            eigen_route: EigenRoute::Auto,
            skip_epoch_metrics: false,
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        (n / self.batch_size.max(1)).max(1)
    }

    pub fn total_steps(&self, n: usize) -> u64 {
        (self.epochs * self.steps_per_epoch(n)) as u64
    }

    pub fn sampling_ratio(&self, n: usize) -> f64 {
        (self.batch_size as f64 / n as f64).min(1.0)
    }

    /// Checks everything that can be checked without data sizes beyond `p`,
    /// the private size and the public size.
    pub fn validate(&self, p: usize, n_private: usize, n_public: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if n_private == 0 {
            return bad("private dataset is empty".into());
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size {} must be positive", self.step_size));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be non-negative", self.sigma));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip {c} must be positive"));
            }
        }
        if self.algorithm != Algorithm::Sgd && self.clip.is_none() {
            return bad(format!("{} needs a clip bound", self.algorithm.name()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} outside (0, 1)", self.delta));
        }
        if self.micro_batch_size == 0 || self.micro_batch_size > self.batch_size {
            return bad("micro_batch_size must lie in [1, batch_size]".into());
        }
        if self.projection_update_every == 0 {
            return bad("projection_update_every must be at least 1".into());
        }
        if self.projection_start_epoch == 0 {
            return bad("projection_start_epoch is 1-based".into());
        }
        if let Some(r) = self.ball_radius {
            if !(r > 0.0) {
                return bad(format!("ball_radius {r} must be positive"));
            }
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive".into());
        }
        if self.algorithm.is_projected() {
            let k = self.projection_dim;
            if k == 0 {
                return bad("projection_dim k must be at least 1".into());
            }
            if k > p {
                return bad(format!("projection_dim k = {k} exceeds parameter count p = {p}"));
            }
        }
        if self.algorithm == Algorithm::PdpSgd {
            match n_public {
                None | Some(0) => return bad("pdp_sgd needs a public dataset".into()),
                Some(m) if self.projection_dim > m => {
                    return bad(format!(
                        "projection_dim k = {} exceeds public size m = {m}",
                        self.projection_dim
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
