//! `pdpsgd`: train, account, verify and export spectra from the command line.
//!
//! Exit codes: 0 success, 1 a verification assertion failed, 2 usage or
//! configuration error, 3 runtime failure. Errors are reported on stderr as
//! `{"error": {"kind", "code", "message"}}`.

mod cmd;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use pdpsgd::exec::Exec;

use cmd::accountant::AccountantArgs;
use cmd::train::Overrides;
use cmd::verify::Suite;
use error::{CliError, CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "pdpsgd", version, about = "Projected differentially private SGD")]
struct Cli {
    /// Force sequential or parallel execution of the inner loops.
    #[arg(long, global = true, value_enum)]
    exec: Option<ExecArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

impl From<ExecArg> for Exec {
    fn from(e: ExecArg) -> Self {
        match e {
            ExecArg::Sequential => Exec::Sequential,
            ExecArg::Parallel => Exec::Parallel,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from an experiment config and write metrics, summary and config echo.
    Train {
        config: PathBuf,
        /// Run directory; defaults to `output.dir`, then `$PDPSGD_OUTPUT_ROOT/<name>`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override `run.repeat_seeds`.
        #[arg(long)]
        repeat_seeds: Option<usize>,
    },
    /// Privacy of the subsampled Gaussian mechanism, or the noise multiplier for a target ε.
    #[command(group(ArgGroup::new("noise").required(true).args(["sigma", "target_eps"])))]
    Accountant {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        batch: usize,
        #[arg(long)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        target_eps: Option<f64>,
    },
    /// Run a verification experiment and write its CSV and verdict.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Suite parameters (TOML); omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export the public-gradient spectrum along a training run.
    Spectrum {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Eigenvalues kept per checkpoint.
        #[arg(long, default_value_t = 20)]
        top: usize,
        /// Index of the reported eigen-gap; defaults to `train.projection_dim`.
        #[arg(long)]
        k: Option<usize>,
    },
}

fn dispatch(cli: Cli) -> CliResult<u8> {
    let exec = cli.exec.map(Exec::from);
    match cli.command {
        Command::Train { config, output, repeat_seeds } => {
            cmd::train::run(&config, &Overrides { output, repeat_seeds, exec })
        }
        Command::Accountant { n, batch, epochs, delta, sigma, target_eps } => {
            cmd::accountant::run(&AccountantArgs { n, batch, epochs, delta, sigma, target_eps })
        }
        Command::Verify { suite, config, output } => {
            cmd::verify::run(suite, config.as_deref(), output.as_deref(), exec.unwrap_or_default())
        }
        Command::Spectrum { config, output, top, k } => {
            let overrides = Overrides { output, repeat_seeds: None, exec };
            cmd::spectrum::run(&config, &overrides, top, k)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
