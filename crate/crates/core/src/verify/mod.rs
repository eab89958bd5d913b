//! Monte Carlo and diagnostic experiments: second-moment concentration,
//! subspace perturbation, noise reduction, gradient geometry and
//! private-vs-projected convergence on convex problems.
//!
//! Every replicate draws from its own indexed stream, so results do not
//! depend on how replicates are scheduled.

mod concentration;
mod convergence;
mod davis_kahan;
mod geometry;
mod generator;
mod noise;
mod stats;

pub use concentration::{concentration_experiment, ScalingPoint, ScalingReport};
pub use convergence::{
    convergence_comparison, solve_constrained_optimum, AlgorithmRun, ConvergenceAggregate,
    ConvergenceRow, ConvergenceTable, ConvexProblem, ConvexSetup,
};
pub use davis_kahan::{davis_kahan_check, DavisKahanReport, DavisKahanRow};
pub use geometry::{
    coordinate_decay, gaussian_width_estimate, principal_dominance, spectrum_trace,
    DominanceReport, DominanceRow, GradientGeometry, SpectrumRow, WidthEstimate,
};
pub use generator::{symmetric_norm, GaussianGenerator, GradientGenerator, PoolGenerator};
pub use noise::{noise_reduction, NoiseReductionReport};
pub use stats::{fit_power_law, loglog_slope, mean_std, median, stderr};

/// Fewest replicates any Monte Carlo experiment accepts.
pub const MIN_REPLICATES: usize = 5;
