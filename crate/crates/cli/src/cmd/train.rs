use std::path::{Path, PathBuf};

use pdpsgd::data::Dataset;
use pdpsgd::exec::Exec;
use pdpsgd::models::{loss_and_accuracy_with, Model, ModelSpec, ParamVector};
use pdpsgd::optim::{train_from, Checkpoint, EpochMetrics, TrainConfig, TrainResult};
use pdpsgd::privacy::PrivacyLedger;
use pdpsgd::verify::mean_std;
use serde::Serialize;

use crate::config::{ExperimentConfig, PreparedData};
use crate::error::{CliResult, EXIT_PASS};
use crate::output::{
    cell, create_dir, resolve_dir, write_csv, write_csv_records, write_json, write_toml, CONFIG_ECHO,
    SCHEMA_VERSION,
};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub repeat_seeds: Option<usize>,
    pub exec: Option<Exec>,
}

/// A validated experiment with its data loaded and run directory chosen.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub data: PreparedData,
    pub model: Model,
    pub dir: PathBuf,
}

/// Loads, resolves and validates everything before any gradient is computed.
pub fn prepare(config_path: &Path, overrides: &Overrides) -> CliResult<Prepared> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(r) = overrides.repeat_seeds {
        config.run.repeat_seeds = r;
    }
    if let Some(e) = overrides.exec {
        config.run.exec = e;
    }
    config.validate_static()?;
    let dir = resolve_dir(overrides.output.as_deref(), config.output.dir.as_deref(), &config.name)?;
    config.output.dir = Some(dir.clone());
    let data = PreparedData::load(&config.dataset)?;
    let model = data.validate(&config.model, &config.train)?;
    Ok(Prepared { config, data, model, dir })
}

impl Prepared {
    /// Seeds and initialisation for repetition `index`.
    pub fn repetition(&self, index: usize) -> (TrainConfig, ModelSpec) {
        let by = index as u64 * self.config.run.seed_stride;
        let mut train = self.config.train.clone();
        train.seeds = train.seeds.offset(by);
        let mut spec = self.config.model.clone();
        spec.init_seed = spec.init_seed.wrapping_add(by);
        (train, spec)
    }

    pub fn run_repetition(&self, index: usize) -> CliResult<TrainResult> {
        let (train, spec) = self.repetition(index);
        let init = self.model.init_params(&spec);
        let d = &self.data;
        Ok(train_from(
            self.config.run.exec,
            &train,
            &self.model,
            &init,
            &d.private,
            d.public_for(train.algorithm),
            d.test.as_ref(),
        )?)
    }

    pub fn write_echo(&self) -> CliResult<()> {
        create_dir(&self.dir)?;
        write_toml(&self.dir.join(CONFIG_ECHO), &self.config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
}

fn evaluate(exec: Exec, model: &Model, w: &ParamVector, private: &Dataset, test: Option<&Dataset>) -> CliResult<Evaluation> {
    let (train_loss, train_acc) = loss_and_accuracy_with(exec, model, w, private)?;
    let (test_loss, test_acc) = match test {
        Some(t) => {
            let (l, a) = loss_and_accuracy_with(exec, model, w, t)?;
            (Some(l), Some(a))
        }
        None => (None, None),
    };
    Ok(Evaluation { train_loss, train_acc, test_loss, test_acc })
}

#[derive(Debug, Serialize)]
struct MetricsRow {
    schema_version: u32,
    seed_index: usize,
    epoch: usize,
    steps_done: u64,
    train_loss: Option<f64>,
    train_acc: Option<f64>,
    test_loss: Option<f64>,
    test_acc: Option<f64>,
    grad_norm: Option<f64>,
    principal_grad_norm: Option<f64>,
    eigen_gap: Option<f64>,
    subspace_refreshes: usize,
    epsilon_so_far: Option<f64>,
}

impl MetricsRow {
    fn new(seed_index: usize, m: &EpochMetrics) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed_index,
            epoch: m.epoch,
            steps_done: m.steps_done,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            test_loss: m.test_loss,
            test_acc: m.test_acc,
            grad_norm: m.grad_norm,
            principal_grad_norm: m.principal_grad_norm,
            eigen_gap: m.eigen_gap,
            subspace_refreshes: m.subspace_refreshes,
            epsilon_so_far: m.epsilon_so_far,
        }
    }
}

type MetricGetter = fn(&EpochMetrics) -> Option<f64>;

/// Columns averaged across repetitions in `metrics_aggregate.csv`.
const AGGREGATED: [(&str, MetricGetter); 8] = [
    ("train_loss", |m| m.train_loss),
    ("train_acc", |m| m.train_acc),
    ("test_loss", |m| m.test_loss),
    ("test_acc", |m| m.test_acc),
    ("grad_norm", |m| m.grad_norm),
    ("principal_grad_norm", |m| m.principal_grad_norm),
    ("eigen_gap", |m| m.eigen_gap),
    ("epsilon_so_far", |m| m.epsilon_so_far),
];

/// Mean and std of a value present in every repetition.
fn across(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_std(&v))
}

fn write_aggregate(path: &Path, results: &[TrainResult]) -> CliResult<()> {
    let mut header = vec!["schema_version".to_string(), "epoch".into(), "repeats".into()];
    for (name, _) in AGGREGATED {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    let epochs = results.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
    let rows: Vec<Vec<String>> = (0..epochs)
        .map(|e| {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                results[0].epochs[e].epoch.to_string(),
                results.len().to_string(),
            ];
            for (_, get) in AGGREGATED {
                let vals: Vec<Option<f64>> = results.iter().map(|r| get(&r.epochs[e])).collect();
                let stat = across(&vals);
                row.push(cell(stat.map(|s| s.0)));
                row.push(cell(stat.map(|s| s.1)));
            }
            row
        })
        .collect();
    write_csv_records(path, &header, &rows)
}

#[derive(Debug, Serialize)]
struct RunSummary {
    seed_index: usize,
    seed_offset: u64,
    steps: u64,
    final_epoch: Option<EpochMetrics>,
    final_iterate: Evaluation,
    averaged_iterate: Evaluation,
    sampled_iterate_step: Option<u64>,
    subspace_refreshes: usize,
    ledger: Option<PrivacyLedger>,
}

#[derive(Debug, Serialize)]
struct Stat {
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema_version: u32,
    name: &'a str,
    algorithm: &'static str,
    repeats: usize,
    runs: Vec<RunSummary>,
    /// Mean and std across repetitions of the final and averaged iterates' metrics.
    aggregate: std::collections::BTreeMap<String, Stat>,
}

#[derive(Serialize)]
struct CheckpointFile<'a> {
    schema_version: u32,
    final_params: &'a ParamVector,
    averaged_params: &'a ParamVector,
    checkpoints: &'a [Checkpoint],
}

fn metrics_name(index: usize, repeats: usize) -> String {
    if repeats == 1 {
        "metrics.csv".into()
    } else {
        format!("metrics_seed{index}.csv")
    }
}

pub fn run(config_path: &Path, overrides: &Overrides) -> CliResult<u8> {
    let prep = prepare(config_path, overrides)?;
    prep.write_echo()?;
    let cfg = &prep.config;
    let repeats = cfg.run.repeat_seeds;
    let exec = cfg.run.exec;
    let mut results = Vec::with_capacity(repeats);
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let result = prep.run_repetition(r)?;
        let d = &prep.data;
        let test = d.test.as_ref();
        if cfg.output.csv {
            let rows: Vec<MetricsRow> = result.epochs.iter().map(|m| MetricsRow::new(r, m)).collect();
            write_csv(&prep.dir.join(metrics_name(r, repeats)), &rows)?;
        }
        if cfg.output.checkpoints {
            write_json(
                &prep.dir.join(format!("checkpoints_seed{r}.json")),
                &CheckpointFile {
                    schema_version: SCHEMA_VERSION,
                    final_params: &result.final_params,
                    averaged_params: &result.averaged_params,
                    checkpoints: &result.checkpoints,
                },
            )?;
        }
        runs.push(RunSummary {
            seed_index: r,
            seed_offset: r as u64 * cfg.run.seed_stride,
            steps: result.steps,
            final_epoch: result.epochs.last().cloned(),
            final_iterate: evaluate(exec, &prep.model, &result.final_params, &d.private, test)?,
            averaged_iterate: evaluate(exec, &prep.model, &result.averaged_params, &d.private, test)?,
            sampled_iterate_step: result.sampled_iterate().map(|c| c.step),
            subspace_refreshes: result.subspace_refreshes,
            ledger: result.ledger.clone(),
        });
        results.push(result);
    }
    if cfg.output.csv && repeats > 1 {
        write_aggregate(&prep.dir.join("metrics_aggregate.csv"), &results)?;
    }

    let mut aggregate = std::collections::BTreeMap::new();
    for (which, get) in [
        ("final_iterate", (|r: &RunSummary| r.final_iterate) as fn(&RunSummary) -> Evaluation),
        ("averaged_iterate", |r: &RunSummary| r.averaged_iterate),
    ] {
        let evals: Vec<Evaluation> = runs.iter().map(get).collect();
        let fields: [(&str, Vec<Option<f64>>); 4] = [
            ("train_loss", evals.iter().map(|e| Some(e.train_loss)).collect()),
            ("train_acc", evals.iter().map(|e| Some(e.train_acc)).collect()),
            ("test_loss", evals.iter().map(|e| e.test_loss).collect()),
            ("test_acc", evals.iter().map(|e| e.test_acc).collect()),
        ];
        for (name, vals) in fields {
            if let Some((mean, std)) = across(&vals) {
                aggregate.insert(format!("{which}.{name}"), Stat { mean, std });
            }
        }
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        name: &cfg.name,
        algorithm: cfg.train.algorithm.name(),
        repeats,
        runs,
        aggregate,
    };
    if cfg.output.json {
        write_json(&prep.dir.join("summary.json"), &summary)?;
    }
    println!(
        "{}",
        serde_json::json!({ "status": "ok", "output_dir": prep.dir, "repeats": repeats })
    );
    Ok(EXIT_PASS)
}
