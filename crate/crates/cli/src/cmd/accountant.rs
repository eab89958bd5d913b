use pdpsgd::privacy::{calibrate_sigma, compose_and_convert, default_orders, MechanismConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult, EXIT_PASS};
use crate::output::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy)]
pub struct AccountantArgs {
    pub n: usize,
    pub batch: usize,
    pub epochs: usize,
    pub delta: f64,
    pub sigma: Option<f64>,
    pub target_eps: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Report {
    schema_version: u32,
    epsilon: f64,
    sigma: f64,
    delta: f64,
    q: f64,
    steps: u64,
    chosen_order: Option<u32>,
    /// `[α, T·ε(α)]` pairs.
    rdp_curve: Vec<(u32, f64)>,
    /// Present when σ was calibrated.
    target_eps: Option<f64>,
}

/// Steps use the trainer's convention: `epochs · max(1, ⌊n / batch⌋)`.
pub fn run(a: &AccountantArgs) -> CliResult<u8> {
    if a.n == 0 || a.batch == 0 {
        return Err(CliError::usage("n and batch must be positive"));
    }
    if a.batch > a.n {
        return Err(CliError::usage(format!("batch {} exceeds n {}", a.batch, a.n)));
    }
    let q = a.batch as f64 / a.n as f64;
    let steps = (a.epochs * (a.n / a.batch).max(1)) as u64;
    let sigma = match (a.sigma, a.target_eps) {
        (Some(s), None) => s,
        (None, Some(eps)) => {
            if steps == 0 {
                return Err(CliError::usage(
                    "target_eps needs at least one step; with epochs = 0 every sigma gives epsilon 0",
                ));
            }
            calibrate_sigma(eps, a.delta, q, steps)?
        }
        _ => return Err(CliError::usage("give exactly one of --sigma and --target-eps")),
    };
    let config = MechanismConfig { q, sigma, steps, delta: a.delta };
    config.validate()?;
    let ledger = compose_and_convert(&config, &default_orders())?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        epsilon: ledger.epsilon,
        sigma,
        delta: a.delta,
        q,
        steps,
        chosen_order: ledger.chosen_order,
        rdp_curve: ledger.rdp_curve,
        target_eps: a.target_eps,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(EXIT_PASS)
}
