use std::path::Path;

use clap::ValueEnum;
use pdpsgd::data::{split_indices, synthetic_lowrank, SplitSpec, SyntheticSpec};
use pdpsgd::exec::Exec;
use pdpsgd::models::{mean_gradient, per_example_gradients_with, ModelSpec};
use pdpsgd::optim::{train_from, Algorithm, TrainConfig};
use pdpsgd::subspace::{top_k_eigenspace_with, EigenOptions};
use pdpsgd::verify::{
    coordinate_decay, concentration_experiment, convergence_comparison, davis_kahan_check,
    gaussian_width_estimate, noise_reduction, principal_dominance, spectrum_trace, AlgorithmRun,
    ConvexProblem, ConvexSetup, GaussianGenerator,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult, EXIT_ASSERTION, EXIT_PASS};
use crate::output::{create_dir, resolve_dir, write_csv, write_json, write_toml, CONFIG_ECHO, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Suite {
    Concentration,
    DavisKahan,
    NoiseReduction,
    Convergence,
    Geometry,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Concentration => "concentration",
            Suite::DavisKahan => "davis_kahan",
            Suite::NoiseReduction => "noise_reduction",
            Suite::Convergence => "convergence",
            Suite::Geometry => "geometry",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Verdict {
    pub schema_version: u32,
    pub experiment: String,
    pub pass: bool,
    pub statistics: Value,
}

/// Eigenvalues with a gap of 1 after the fifth, chosen so the sample sizes
/// below span the regime where the perturbation bound starts to bind.
const SPECTRUM: [f64; 10] = [1.5, 1.4, 1.3, 1.2, 1.1, 0.1, 0.08, 0.06, 0.04, 0.02];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub dim: usize,
    /// Non-increasing positive eigenvalues of the population second moment.
    pub spectrum: Vec<f64>,
    /// Seed of the random orthonormal eigenframe.
    pub frame_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { dim: 200, spectrum: SPECTRUM.to_vec(), frame_seed: 21 }
    }
}

impl GeneratorConfig {
    fn build(&self) -> CliResult<GaussianGenerator> {
        Ok(GaussianGenerator::random_frame(self.dim, self.spectrum.clone(), self.frame_seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationSuite {
    pub generator: GeneratorConfig,
    pub m_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// Fail unless the fitted log-log slope lies in `slope_band`.
    pub gate_slope: bool,
    pub slope_band: (f64, f64),
}

impl Default for ConcentrationSuite {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            m_values: vec![25, 100, 400],
            replicates: 50,
            seed: 41,
            gate_slope: true,
            slope_band: (-0.65, -0.35),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DavisKahanSuite {
    pub generator: GeneratorConfig,
    pub k: usize,
    pub m_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for DavisKahanSuite {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            k: 5,
            m_values: vec![25, 100, 400],
            replicates: 50,
            seed: 31,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSuite {
    pub dim: usize,
    pub k: usize,
    pub draws: usize,
    pub seed: u64,
    /// Largest accepted `|ratio − k/p| / (k/p)`.
    pub tolerance: f64,
}

impl Default for NoiseSuite {
    fn default() -> Self {
        Self { dim: 1000, k: 50, draws: 2000, seed: 11, tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceGate {
    pub candidate: AlgorithmRun,
    pub baseline: AlgorithmRun,
    /// Pass when `mean excess(candidate) < max_ratio · mean excess(baseline)` at every ε.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSuite {
    pub setup: ConvexSetup,
    pub epsilons: Vec<f64>,
    pub runs: Vec<AlgorithmRun>,
    pub seeds: Vec<u64>,
    pub gate: Option<ConvergenceGate>,
}

impl Default for ConvergenceSuite {
    fn default() -> Self {
        let dp = AlgorithmRun { algorithm: Algorithm::DpSgd, k: 0 };
        let pdp = AlgorithmRun { algorithm: Algorithm::PdpSgd, k: 5 };
        Self {
            setup: ConvexSetup {
                features: 500,
                rank: 5,
                n: 2000,
                public_size: 100,
                label_noise: 0.1,
                data_seed: 7,
                ball_radius: 2.0,
                epochs: 30,
                batch_size: 50,
                step_size: 1.0,
                clip: 1.0,
                delta: 1e-5,
                projection_update_every: 10,
            },
            epsilons: vec![0.3],
            runs: vec![dp, pdp, AlgorithmRun { algorithm: Algorithm::RpdpSgd, k: 50 }],
            seeds: (0..5).collect(),
            gate: Some(ConvergenceGate { candidate: pdp, baseline: dp, max_ratio: 0.5 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySuite {
    pub data: SyntheticSpec,
    pub split: SplitSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Eigenvalues reported per checkpoint.
    pub top: usize,
    /// Dimension of the principal subspace used for the energy split.
    pub k: usize,
    pub width_draws: usize,
    pub seed: u64,
}

impl Default for GeometrySuite {
    fn default() -> Self {
        let mut train = TrainConfig::new(Algorithm::Sgd, 5, 50, 0.2);
        train.checkpoint_every = Some(10);
        train.skip_epoch_metrics = true;
        Self {
            data: SyntheticSpec { features: 30, n: 700, rank: 4, label_noise: 0.0, classes: 3, seed: 5 },
            split: SplitSpec { private_size: 500, public_size: 100, seed: 0 },
            model: ModelSpec::mlp(&[16]),
            train,
            top: 10,
            k: 4,
            width_draws: 200,
            seed: 9,
        }
    }
}

fn load_suite<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("reading {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
    }
}

struct Outcome {
    pass: bool,
    statistics: Value,
}

pub fn run(suite: Suite, config: Option<&Path>, output: Option<&Path>, exec: Exec) -> CliResult<u8> {
    let name = suite.name();
    let dir = resolve_dir(output, None, &format!("verify_{name}"))?;
    let outcome = match suite {
        Suite::Concentration => concentration(load_suite(config)?, &dir, exec)?,
        Suite::DavisKahan => davis_kahan(load_suite(config)?, &dir, exec)?,
        Suite::NoiseReduction => noise(load_suite(config)?, &dir, exec)?,
        Suite::Convergence => convergence(load_suite(config)?, &dir, exec)?,
        Suite::Geometry => geometry(load_suite(config)?, &dir, exec)?,
    };
    let verdict = Verdict {
        schema_version: SCHEMA_VERSION,
        experiment: name.into(),
        pass: outcome.pass,
        statistics: outcome.statistics,
    };
    write_json(&dir.join("verdict.json"), &verdict)?;
    println!("{}", serde_json::to_string(&verdict)?);
    Ok(if verdict.pass { EXIT_PASS } else { EXIT_ASSERTION })
}

/// Creates the run directory and echoes the resolved suite config into it.
fn start<T: Serialize>(dir: &Path, cfg: &T) -> CliResult<()> {
    create_dir(dir)?;
    write_toml(&dir.join(CONFIG_ECHO), cfg)
}

#[derive(Serialize)]
struct ReplicateRow {
    schema_version: u32,
    m: usize,
    replicate: usize,
    error_norm: f64,
}

fn concentration(cfg: ConcentrationSuite, dir: &Path, exec: Exec) -> CliResult<Outcome> {
    start(dir, &cfg)?;
    let generator = cfg.generator.build()?;
    let band = cfg.gate_slope.then_some(cfg.slope_band);
    let report = concentration_experiment(&generator, &cfg.m_values, cfg.replicates, cfg.seed, band, exec)?;
    let rows: Vec<ReplicateRow> = report
        .points
        .iter()
        .flat_map(|p| {
            p.values.iter().enumerate().map(move |(replicate, &error_norm)| ReplicateRow {
                schema_version: SCHEMA_VERSION,
                m: p.axis as usize,
                replicate,
                error_norm,
            })
        })
        .collect();
    write_csv(&dir.join("concentration.csv"), &rows)?;
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|p| json!({ "m": p.axis, "mean": p.mean, "std": p.std, "median": p.median, "stderr": p.stderr }))
        .collect();
    Ok(Outcome {
        // A single sample size has no slope; nothing is gated then.
        pass: report.pass.unwrap_or(true),
        statistics: json!({
            "replicates": report.replicates,
            "points": points,
            "slope": report.slope,
            "slope_band": report.slope_band,
        }),
    })
}

#[derive(Serialize)]
struct DavisKahanCsvRow {
    schema_version: u32,
    m: usize,
    replicate: usize,
    distance: f64,
    error_norm: f64,
    bound: f64,
    conditional: bool,
    satisfied: bool,
}

fn davis_kahan(cfg: DavisKahanSuite, dir: &Path, exec: Exec) -> CliResult<Outcome> {
    start(dir, &cfg)?;
    let generator = cfg.generator.build()?;
    let report = davis_kahan_check(&generator, cfg.k, &cfg.m_values, cfg.replicates, cfg.seed, exec)?;
    let rows: Vec<DavisKahanCsvRow> = report
        .rows
        .iter()
        .map(|r| DavisKahanCsvRow {
            schema_version: SCHEMA_VERSION,
            m: r.m,
            replicate: r.replicate,
            distance: r.distance,
            error_norm: r.error_norm,
            bound: r.bound,
            conditional: r.conditional,
            satisfied: r.satisfied,
        })
        .collect();
    write_csv(&dir.join("davis_kahan.csv"), &rows)?;
    Ok(Outcome {
        pass: report.violations == 0,
        statistics: json!({
            "k": report.k,
            "gap": report.gap,
            "m_values": report.m_values,
            "median_distance": report.median_distance,
            "median_ratios": report.median_ratios,
            "conditional_count": report.conditional_count,
            "violations": report.violations,
        }),
    })
}

#[derive(Serialize)]
struct NoiseRow {
    schema_version: u32,
    p: usize,
    k: usize,
    draws: usize,
    full_energy_mean: f64,
    projected_energy_mean: f64,
    ratio: f64,
    expected: f64,
    relative_error: f64,
}

fn noise(cfg: NoiseSuite, dir: &Path, exec: Exec) -> CliResult<Outcome> {
    start(dir, &cfg)?;
    let r = noise_reduction(cfg.dim, cfg.k, cfg.draws, cfg.seed, exec)?;
    write_csv(
        &dir.join("noise_reduction.csv"),
        &[NoiseRow {
            schema_version: SCHEMA_VERSION,
            p: r.p,
            k: r.k,
            draws: r.draws,
            full_energy_mean: r.full_energy_mean,
            projected_energy_mean: r.projected_energy_mean,
            ratio: r.ratio,
            expected: r.expected,
            relative_error: r.relative_error,
        }],
    )?;
    Ok(Outcome {
        pass: r.relative_error <= cfg.tolerance,
        statistics: json!({
            "ratio": r.ratio,
            "expected": r.expected,
            "relative_error": r.relative_error,
            "tolerance": cfg.tolerance,
        }),
    })
}

#[derive(Serialize)]
struct ConvergenceCsvRow {
    schema_version: u32,
    epsilon: f64,
    sigma: f64,
    algorithm: &'static str,
    k: usize,
    seed: u64,
    excess_risk: f64,
    sampled_grad_norm_sq: f64,
    train_accuracy: f64,
}

fn convergence(cfg: ConvergenceSuite, dir: &Path, exec: Exec) -> CliResult<Outcome> {
    start(dir, &cfg)?;
    if let Some(g) = &cfg.gate {
        for run in [g.candidate, g.baseline] {
            if !cfg.runs.contains(&run) {
                return Err(CliError::usage(format!(
                    "gate refers to {} (k = {}) which is not among the runs",
                    run.algorithm.name(),
                    run.k
                )));
            }
        }
    }
    let problem = ConvexProblem::build(&cfg.setup)?;
    let table = convergence_comparison(&problem, &cfg.epsilons, &cfg.runs, &cfg.seeds, exec)?;
    let rows: Vec<ConvergenceCsvRow> = table
        .rows
        .iter()
        .map(|r| ConvergenceCsvRow {
            schema_version: SCHEMA_VERSION,
            epsilon: r.epsilon,
            sigma: r.sigma,
            algorithm: r.algorithm.name(),
            k: r.k,
            seed: r.seed,
            excess_risk: r.excess_risk,
            sampled_grad_norm_sq: r.sampled_grad_norm_sq,
            train_accuracy: r.train_accuracy,
        })
        .collect();
    write_csv(&dir.join("convergence.csv"), &rows)?;

    let mut pass = true;
    let mut ratios = Vec::new();
    if let Some(g) = &cfg.gate {
        let k_of = |r: AlgorithmRun| if r.algorithm.is_projected() { r.k } else { 0 };
        for &e in &cfg.epsilons {
            let cand = table.aggregate(e, g.candidate.algorithm, k_of(g.candidate));
            let base = table.aggregate(e, g.baseline.algorithm, k_of(g.baseline));
            let (Some(c), Some(b)) = (cand, base) else {
                return Err(CliError::runtime(format!("missing aggregate at epsilon {e}")));
            };
            let ok = c.mean_excess_risk < g.max_ratio * b.mean_excess_risk;
            pass &= ok;
            ratios.push(json!({
                "epsilon": e,
                "ratio": c.mean_excess_risk / b.mean_excess_risk,
                "pass": ok,
            }));
        }
    }
    Ok(Outcome {
        pass,
        statistics: json!({
            "steps": table.steps,
            "q": table.q,
            "optimum_loss": table.optimum_loss,
            "aggregates": table.aggregates,
            "gate": cfg.gate,
            "ratios": ratios,
        }),
    })
}

#[derive(Serialize)]
struct SpectrumCsvRow {
    schema_version: u32,
    step: u64,
    index: usize,
    eigenvalue: f64,
    trace: f64,
    eigen_gap_at_k: f64,
}

#[derive(Serialize)]
struct DominanceCsvRow {
    schema_version: u32,
    step: u64,
    principal_energy: f64,
    residual_energy: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct DecayCsvRow {
    schema_version: u32,
    rank: usize,
    abs_coordinate: f64,
}

/// Relative slack when comparing eigenvalue sums with the trace.
const TRACE_SLACK: f64 = 1e-8;

pub fn spectrum_rows(rows: &[pdpsgd::verify::SpectrumRow]) -> Vec<impl Serialize> {
    rows.iter()
        .flat_map(|r| {
            r.summary.top_eigenvalues.iter().enumerate().map(move |(i, &eigenvalue)| SpectrumCsvRow {
                schema_version: SCHEMA_VERSION,
                step: r.step,
                index: i + 1,
                eigenvalue,
                trace: r.summary.trace,
                eigen_gap_at_k: r.summary.eigen_gap_at_k,
            })
        })
        .collect()
}

/// Spectrum rows that break ordering, sign or trace consistency.
pub fn spectrum_defects(rows: &[pdpsgd::verify::SpectrumRow]) -> usize {
    rows.iter()
        .filter(|r| {
            let ev = &r.summary.top_eigenvalues;
            let scale = ev.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
            let descending = ev.windows(2).all(|w| w[0] >= w[1]);
            let nonneg = ev.iter().all(|&v| v >= -1e-12 * scale);
            let sum: f64 = ev.iter().sum();
            let bounded = sum <= r.summary.trace * (1.0 + TRACE_SLACK) + 1e-12;
            !(descending && nonneg && bounded && r.summary.eigen_gap_at_k >= 0.0)
        })
        .count()
}

fn geometry(cfg: GeometrySuite, dir: &Path, exec: Exec) -> CliResult<Outcome> {
    start(dir, &cfg)?;
    let problem = synthetic_lowrank(&cfg.data)?;
    let pool = &problem.dataset;
    let (private, public, _) = split_indices(pool.len(), &cfg.split)?;
    if public.is_empty() {
        return Err(CliError::usage("geometry needs a public set"));
    }
    let (private, public) = (pool.subset(&private)?, pool.subset(&public)?);
    let model = cfg.model.build(pool.feature_dim(), pool.class_count())?;
    let mut train = cfg.train.clone();
    if train.checkpoint_every.is_none() {
        train.checkpoint_every = Some(train.steps_per_epoch(private.len()));
    }
    let init = model.init_params(&cfg.model);
    let public_opt = (train.algorithm == Algorithm::PdpSgd).then_some(&public);
    let result = train_from(exec, &train, &model, &init, &private, public_opt, None)?;

    let trace = spectrum_trace(exec, &result.checkpoints, &model, &public, cfg.top, cfg.k)?;
    let opts = EigenOptions { exec, ..EigenOptions::default() };
    let all: Vec<usize> = (0..private.len()).collect();
    let oracle = result
        .checkpoints
        .iter()
        .map(|c| {
            let gb = per_example_gradients_with(exec, &model, &c.params, &private, &all)?;
            top_k_eigenspace_with(&gb, cfg.k, &opts)
        })
        .collect::<pdpsgd::Result<Vec<_>>>()?;
    let dominance = principal_dominance(&result.checkpoints, &oracle, &model, &private)?;
    let (g, _) = mean_gradient(&model, &result.final_params, &private)?;
    let decay = coordinate_decay(&g)?;
    let public_all: Vec<usize> = (0..public.len()).collect();
    let public_grads = per_example_gradients_with(exec, &model, &result.final_params, &public, &public_all)?;
    let width = gaussian_width_estimate(public_grads.grads(), cfg.width_draws, cfg.seed, exec)?;

    write_csv(&dir.join("geometry_spectrum.csv"), &spectrum_rows(&trace))?;
    let dom_rows: Vec<DominanceCsvRow> = dominance
        .rows
        .iter()
        .map(|r| DominanceCsvRow {
            schema_version: SCHEMA_VERSION,
            step: r.step,
            principal_energy: r.principal_energy,
            residual_energy: r.residual_energy,
            ratio: r.ratio,
        })
        .collect();
    write_csv(&dir.join("geometry_dominance.csv"), &dom_rows)?;
    let decay_rows: Vec<DecayCsvRow> = decay
        .sorted_abs_coordinates
        .iter()
        .enumerate()
        .map(|(i, &abs_coordinate)| DecayCsvRow { schema_version: SCHEMA_VERSION, rank: i + 1, abs_coordinate })
        .collect();
    write_csv(&dir.join("geometry_decay.csv"), &decay_rows)?;

    let defects = spectrum_defects(&trace);
    let width_ok = width.mean.is_finite() && width.stderr.is_finite();
    Ok(Outcome {
        pass: defects == 0 && width_ok,
        statistics: json!({
            "checkpoints": trace.len(),
            "spectrum_defects": defects,
            "mean_residual_to_principal": dominance.mean_ratio,
            "decay_fit": { "c": decay.decay_fit.0, "exponent": decay.decay_fit.1 },
            "gaussian_width": width,
        }),
    })
}
