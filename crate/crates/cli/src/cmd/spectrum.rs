use std::path::Path;

use pdpsgd::verify::spectrum_trace;
use serde_json::json;

use super::train::{prepare, Overrides};
use super::verify::{spectrum_defects, spectrum_rows};
use crate::error::{CliError, CliResult, EXIT_ASSERTION, EXIT_PASS};
use crate::output::{write_csv, write_json, SCHEMA_VERSION};

/// Trains the first repetition of an experiment, storing an iterate every
/// epoch unless the config says otherwise, and exports the public-gradient
/// spectrum at each stored iterate to `spectrum.csv`.
pub fn run(config_path: &Path, overrides: &Overrides, top: usize, k: Option<usize>) -> CliResult<u8> {
    let mut prep = prepare(config_path, overrides)?;
    let Some(public) = prep.data.public.clone() else {
        return Err(CliError::usage("spectrum needs a public set (dataset.split.public_size > 0)"));
    };
    let k = k.unwrap_or(prep.config.train.projection_dim.max(1));
    if k == 0 || k > top || top > public.len() {
        return Err(CliError::usage(format!(
            "need 1 <= k <= top <= public size; got k = {k}, top = {top}, public size = {}",
            public.len()
        )));
    }
    if prep.config.train.checkpoint_every.is_none() {
        prep.config.train.checkpoint_every = Some(prep.config.train.steps_per_epoch(prep.data.private.len()));
    }
    prep.write_echo()?;
    let result = prep.run_repetition(0)?;
    let exec = prep.config.run.exec;
    let trace = spectrum_trace(exec, &result.checkpoints, &prep.model, &public, top, k)?;
    write_csv(&prep.dir.join("spectrum.csv"), &spectrum_rows(&trace))?;
    let defects = spectrum_defects(&trace);
    // Mean of 1/α² over the stored iterates; undefined once any gap vanishes.
    let inverse_gap_sq: Vec<f64> = trace.iter().map(|r| r.summary.eigen_gap_at_k.powi(-2)).collect();
    let mean_inverse_gap_sq = (!trace.is_empty() && inverse_gap_sq.iter().all(|v| v.is_finite()))
        .then(|| inverse_gap_sq.iter().sum::<f64>() / inverse_gap_sq.len() as f64);
    let verdict = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": "spectrum",
        "pass": defects == 0,
        "statistics": {
            "checkpoints": trace.len(),
            "top": top,
            "k": k,
            "spectrum_defects": defects,
            "mean_inverse_gap_sq": mean_inverse_gap_sq,
        },
    });
    write_json(&prep.dir.join("verdict.json"), &verdict)?;
    println!("{verdict}");
    Ok(if defects == 0 { EXIT_PASS } else { EXIT_ASSERTION })
}
