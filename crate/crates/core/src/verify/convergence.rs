use serde::{Deserialize, Serialize};

use super::stats::mean_std;
use crate::core_math::norm2;
use crate::data::{synthetic_lowrank, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{loss_and_accuracy_with, mean_gradient, Model, ModelFamily, ModelSpec, ParamVector};
use crate::optim::{ball_project, train_from, Algorithm, Seeds, StepSchedule, TrainConfig};
use crate::privacy::calibrate_sigma;

/// A ball-constrained logistic regression problem on planted low-rank data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexSetup {
    pub features: usize,
    pub rank: usize,
    /// Private training set size.
    pub n: usize,
    pub public_size: usize,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub data_seed: u64,
    pub ball_radius: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Base step size; the schedule is `step_size / √T`.
    pub step_size: f64,
    pub clip: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_one")]
    pub projection_update_every: usize,
}

fn default_delta() -> f64 {
    1e-5
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct ConvexProblem {
    pub setup: ConvexSetup,
    pub private: Dataset,
    pub public: Dataset,
    pub spec: ModelSpec,
    pub model: Model,
    /// Constrained minimiser of the private empirical loss.
    pub optimum: ParamVector,
    pub optimum_loss: f64,
}

impl ConvexProblem {
    pub fn build(setup: &ConvexSetup) -> Result<Self> {
        if !(setup.ball_radius > 0.0) {
            return Err(Error::InvalidArgument("ball radius must be positive".into()));
        }
        let all = synthetic_lowrank(&SyntheticSpec {
            features: setup.features,
            n: setup.n + setup.public_size,
            rank: setup.rank,
            label_noise: setup.label_noise,
            classes: 2,
            seed: setup.data_seed,
        })?
        .dataset;
        let idx: Vec<usize> = (0..all.len()).collect();
        let private = all.subset(&idx[..setup.n])?;
        let public = all.subset(&idx[setup.n..])?;
        let spec = ModelSpec {
            bias: false,
            ..ModelSpec::logistic()
        };
        let model = spec.build(setup.features, 2)?;
        let start = model.init_params(&spec);
        let (optimum, optimum_loss) =
            solve_constrained_optimum(&model, &private, &start, setup.ball_radius, 1e-10, 200_000)?;
        Ok(Self {
            setup: setup.clone(),
            private,
            public,
            spec,
            model,
            optimum,
            optimum_loss,
        })
    }

    pub fn steps(&self) -> u64 {
        self.train_config(Algorithm::Sgd, 1, 0.0, 0).total_steps(self.private.len())
    }

    pub fn sampling_ratio(&self) -> f64 {
        self.setup.batch_size as f64 / self.private.len() as f64
    }

    fn train_config(&self, algorithm: Algorithm, k: usize, sigma: f64, seed: u64) -> TrainConfig {
        let s = &self.setup;
        let mut c = TrainConfig::new(algorithm, s.epochs, s.batch_size, s.step_size);
        c.schedule = StepSchedule::InvSqrtT;
        c.clip = Some(s.clip);
        c.sigma = sigma;
        c.delta = s.delta;
        c.projection_dim = k;
        c.projection_update_every = s.projection_update_every;
        c.ball_radius = Some(s.ball_radius);
        c.seeds = Seeds::default().offset(seed.wrapping_mul(1000));
        c.skip_epoch_metrics = true;
        c
    }
}

/// Minimises the empirical loss of a convex model over `{‖w‖ ≤ radius}` with
/// accelerated projected gradient descent and backtracking. Stops when the
/// gradient mapping norm falls below `tol`.
pub fn solve_constrained_optimum(
    model: &Model,
    data: &Dataset,
    start: &ParamVector,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(ParamVector, f64)> {
    if !matches!(model.family(), ModelFamily::Logistic | ModelFamily::SoftmaxLinear) {
        return Err(Error::InvalidArgument("constrained optimum needs a convex model".into()));
    }
    let value = |w: &ParamVector| -> Result<f64> { Ok(mean_gradient(model, w, data)?.1) };
    let mut x = ball_project(start, radius)?;
    let mut fx = value(&x)?;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    for _ in 0..max_iter {
        let (gy, fy) = mean_gradient(model, &y, data)?;
        let (cand, fc, d_norm) = loop {
            let step: Vec<f64> = y.values.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            let cand = ball_project(&y.with_values(step), radius)?;
            let d: Vec<f64> = cand.values.iter().zip(&y.values).map(|(a, b)| a - b).collect();
            let lin: f64 = d.iter().zip(&gy).map(|(a, b)| a * b).sum();
            let dd: f64 = d.iter().map(|v| v * v).sum();
            let fc = value(&cand)?;
            // The slack absorbs rounding in the loss values, which otherwise
            // inflates `lip` once predicted decreases fall below it.
            if fc <= fy + lin + 0.5 * lip * dd + 1e-13 * (1.0 + fy.abs()) {
                break (cand, fc, dd.sqrt());
            }
            lip *= 2.0;
        };
        if lip * d_norm <= tol {
            return Ok(if fc <= fx { (cand, fc) } else { (x, fx) });
        }
        // Restart the momentum when it made things worse.
        if fc > fx && t > 1.0 {
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        let yv: Vec<f64> = cand
            .values
            .iter()
            .zip(&x.values)
            .map(|(a, b)| a + mom * (a - b))
            .collect();
        y = ball_project(&cand.with_values(yv), radius)?;
        x = cand;
        fx = fc;
        t = t_next;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate: fx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    /// Projection dimension; ignored by unprojected algorithms.
    #[serde(default)]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub sigma: f64,
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    /// `L̂(w̄) − L̂(w*)` at the averaged iterate.
    pub excess_risk: f64,
    /// `‖∇L̂(w_R)‖²` at the uniformly sampled iterate.
    pub sampled_grad_norm_sq: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceAggregate {
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub k: usize,
    pub mean_excess_risk: f64,
    pub std_excess_risk: f64,
    pub mean_sampled_grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub steps: u64,
    pub q: f64,
    pub optimum_loss: f64,
    pub rows: Vec<ConvergenceRow>,
    pub aggregates: Vec<ConvergenceAggregate>,
}

impl ConvergenceTable {
    pub fn aggregate(&self, epsilon: f64, algorithm: Algorithm, k: usize) -> Option<&ConvergenceAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.epsilon == epsilon && a.algorithm == algorithm && a.k == k)
    }
}

/// Trains every algorithm at every privacy level over `seeds` and reports
/// excess empirical risk against the constrained optimum. An infinite
/// `epsilon` means no noise.
pub fn convergence_comparison(
    problem: &ConvexProblem,
    eps: &[f64],
    runs: &[AlgorithmRun],
    seeds: &[u64],
    exec: Exec,
) -> Result<ConvergenceTable> {
    if seeds.is_empty() || runs.is_empty() || eps.is_empty() {
        return Err(Error::InvalidArgument("need at least one epsilon, algorithm and seed".into()));
    }
    let steps = problem.steps();
    let q = problem.sampling_ratio();
    let start = problem.model.init_params(&problem.spec);
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    for &e in eps {
        if !(e > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon {e} must be positive")));
        }
        let sigma = if e.is_infinite() {
            0.0
        } else {
            calibrate_sigma(e, problem.setup.delta, q, steps)?
        };
        for run in runs {
            let k = if run.algorithm.is_projected() { run.k } else { 0 };
            let algorithm = run.algorithm;
            let mut block = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let cfg = problem.train_config(algorithm, k, sigma, seed);
                let res = train_from(
                    exec,
                    &cfg,
                    &problem.model,
                    &start,
                    &problem.private,
                    Some(&problem.public),
                    None,
                )?;
                let (avg_loss, acc) =
                    loss_and_accuracy_with(exec, &problem.model, &res.averaged_params, &problem.private)?;
                let sampled = res.sampled_iterate().map_or(&res.final_params, |c| &c.params);
                let (g, _) = mean_gradient(&problem.model, sampled, &problem.private)?;
                block.push(ConvergenceRow {
                    epsilon: e,
                    sigma,
                    algorithm,
                    k,
                    seed,
                    excess_risk: avg_loss - problem.optimum_loss,
                    sampled_grad_norm_sq: norm2(&g).powi(2),
                    train_accuracy: acc,
                });
            }
            let ex: Vec<f64> = block.iter().map(|r| r.excess_risk).collect();
            let gn: Vec<f64> = block.iter().map(|r| r.sampled_grad_norm_sq).collect();
            let (mean, std) = mean_std(&ex);
            aggregates.push(ConvergenceAggregate {
                epsilon: e,
                algorithm,
                k,
                mean_excess_risk: mean,
                std_excess_risk: std,
                mean_sampled_grad_norm_sq: mean_std(&gn).0,
            });
            rows.extend(block);
        }
    }
    Ok(ConvergenceTable {
        steps,
        q,
        optimum_loss: problem.optimum_loss,
        rows,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(radius: f64, clip: f64) -> ConvexSetup {
        ConvexSetup {
            features: 30,
            rank: 3,
            n: 300,
            public_size: 30,
            label_noise: 0.1,
            data_seed: 2,
            ball_radius: radius,
            epochs: 4,
            batch_size: 15,
            step_size: 1.0,
            clip,
            delta: 1e-5,
            projection_update_every: 5,
        }
    }

    #[test]
    fn optimum_satisfies_first_order_conditions() {
        let free = ConvexProblem::build(&setup(100.0, 1.0)).unwrap();
        let (g, _) = mean_gradient(&free.model, &free.optimum, &free.private).unwrap();
        assert!(norm2(&free.optimum.values) < 100.0);
        assert!(norm2(&g) < 1e-8, "{}", norm2(&g));

        let tight = ConvexProblem::build(&setup(0.5, 1.0)).unwrap();
        let w = &tight.optimum.values;
        let (g, _) = mean_gradient(&tight.model, &tight.optimum, &tight.private).unwrap();
        assert!((norm2(w) - 0.5).abs() < 1e-12);
        // On the boundary the negative gradient points straight out of the ball.
        let cos = -crate::core_math::dot(w, &g) / (norm2(w) * norm2(&g));
        assert!((cos - 1.0).abs() < 1e-8, "{cos}");
        assert!(tight.optimum_loss >= free.optimum_loss);
    }

    #[test]
    fn noiseless_private_runs_match_sgd() {
        // With a clip bound that never binds and no noise every variant is SGD.
        let problem = ConvexProblem::build(&setup(100.0, 1e6)).unwrap();
        let runs = [
            AlgorithmRun { algorithm: Algorithm::Sgd, k: 0 },
            AlgorithmRun { algorithm: Algorithm::DpSgd, k: 0 },
            AlgorithmRun { algorithm: Algorithm::PdpSgd, k: 3 },
        ];
        let t = convergence_comparison(&problem, &[f64::INFINITY], &runs, &[0, 1], Exec::default()).unwrap();
        assert_eq!(t.rows.len(), 6);
        let sgd = t.aggregate(f64::INFINITY, Algorithm::Sgd, 0).unwrap().mean_excess_risk;
        let dp = t.aggregate(f64::INFINITY, Algorithm::DpSgd, 0).unwrap().mean_excess_risk;
        let pdp = t.aggregate(f64::INFINITY, Algorithm::PdpSgd, 3).unwrap().mean_excess_risk;
        assert_eq!(sgd, dp);
        assert!((pdp - sgd).abs() < 1e-9);
        assert!(sgd >= -1e-12);
    }

    #[test]
    fn finite_epsilon_calibrates_noise() {
        let problem = ConvexProblem::build(&setup(2.0, 1.0)).unwrap();
        let runs = [AlgorithmRun { algorithm: Algorithm::DpSgd, k: 0 }];
        let t = convergence_comparison(&problem, &[1.0], &runs, &[0], Exec::default()).unwrap();
        let r = &t.rows[0];
        assert!(r.sigma > 0.0);
        let eps = crate::privacy::epsilon(t.q, r.sigma, t.steps, 1e-5).unwrap();
        assert!((eps - 1.0).abs() < 1e-6);
        assert!(convergence_comparison(&problem, &[0.0], &runs, &[0], Exec::default()).is_err());
    }
}
