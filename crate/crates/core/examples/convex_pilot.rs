//! Pilot for the convex separation check: prints per-seed excess risk of
//! DP-SGD, PDP-SGD and RPDP-SGD on a ball-constrained low-rank logistic
//! problem so the acceptance margin can be fixed from data.
//!
//! `cargo run --release -p pdpsgd --example convex_pilot -- [radius] [step_size] [seeds]`

use pdpsgd::core_math::norm2;
use pdpsgd::exec::Exec;
use pdpsgd::optim::Algorithm;
use pdpsgd::verify::{convergence_comparison, AlgorithmRun, ConvexProblem, ConvexSetup};

fn main() -> pdpsgd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let radius: f64 = args.first().map_or(Ok(2.0), |s| s.parse()).expect("radius");
    let step: f64 = args.get(1).map_or(Ok(1.0), |s| s.parse()).expect("step size");
    let seeds: u64 = args.get(2).map_or(Ok(5), |s| s.parse()).expect("seed count");
    let setup = ConvexSetup {
        features: 500,
        rank: 5,
        n: 2000,
        public_size: 100,
        label_noise: 0.1,
        data_seed: 7,
        ball_radius: radius,
        epochs: 30,
        batch_size: 50,
        step_size: step,
        clip: 1.0,
        delta: 1e-5,
        projection_update_every: 10,
    };
    println!("{setup:?}");
    let t = std::time::Instant::now();
    let problem = ConvexProblem::build(&setup)?;
    println!(
        "optimum loss {:.6}, |w*| {:.4}, solved in {:?}",
        problem.optimum_loss,
        norm2(&problem.optimum.values),
        t.elapsed()
    );
    let runs = [
        AlgorithmRun { algorithm: Algorithm::DpSgd, k: 0 },
        AlgorithmRun { algorithm: Algorithm::PdpSgd, k: 5 },
        AlgorithmRun { algorithm: Algorithm::RpdpSgd, k: 50 },
    ];
    let seeds: Vec<u64> = (0..seeds).collect();
    let t = std::time::Instant::now();
    let table = convergence_comparison(&problem, &[0.3, f64::INFINITY], &runs, &seeds, Exec::default())?;
    println!("T = {}, q = {}, runs took {:?}", table.steps, table.q, t.elapsed());
    for r in &table.rows {
        println!(
            "eps {:>5} sigma {:>8.4} {:>9} k {:>3} seed {} excess {:.6} acc {:.3}",
            r.epsilon,
            r.sigma,
            r.algorithm.name(),
            r.k,
            r.seed,
            r.excess_risk,
            r.train_accuracy
        );
    }
    for a in &table.aggregates {
        println!(
            "eps {:>5} {:>9} k {:>3} mean {:.6} std {:.6}",
            a.epsilon,
            a.algorithm.name(),
            a.k,
            a.mean_excess_risk,
            a.std_excess_risk
        );
    }
    Ok(())
}
