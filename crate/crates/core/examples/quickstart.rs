use pdpsgd::data::{split_public_private, synthetic_lowrank, SplitSpec, SyntheticSpec};
use pdpsgd::models::ModelSpec;
use pdpsgd::optim::{train, Algorithm, TrainConfig};

fn main() -> pdpsgd::Result<()> {
    let pool = synthetic_lowrank(&SyntheticSpec {
        features: 40,
        n: 1600,
        rank: 5,
        label_noise: 0.05,
        classes: 3,
        seed: 3,
    })?
    .dataset;
    let (public, private) =
        split_public_private(&pool, &SplitSpec { private_size: 1000, public_size: 100, seed: 0 })?;

    let mut cfg = TrainConfig::new(Algorithm::PdpSgd, 30, 50, 0.1);
    cfg.clip = Some(1.0);
    cfg.sigma = 2.0;
    cfg.projection_dim = 10;
    let result = train(&cfg, &ModelSpec::mlp(&[32]), &private, Some(&public), None)?;
    let last = result.epochs.last().expect("30 epochs");
    println!(
        "ε = {:.3}, train accuracy {:.3}",
        result.ledger.as_ref().map_or(0.0, |l| l.epsilon),
        last.train_acc.unwrap_or(f64::NAN)
    );
    Ok(())
}
