//! End-to-end: IDX files on disk, public/private split, projected private
//! training and the diagnostics that read its checkpoints.

use std::path::{Path, PathBuf};

use pdpsgd::core_math::{norm2, RngStream};
use pdpsgd::data::{load_idx, split_public_private, write_idx_images, write_idx_labels, SplitSpec};
use pdpsgd::exec::Exec;
use pdpsgd::models::{per_example_gradients_with, ModelSpec};
use pdpsgd::optim::{train_with, Algorithm, TrainConfig};
use pdpsgd::subspace::top_k_eigenspace;
use pdpsgd::verify::{principal_dominance, spectrum_trace};
use rand::Rng;

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pdpsgd-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// 8×8 "digits": class c lights up row c with some pixel noise.
fn write_toy_idx(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let rng = RngStream::new(3, "toy");
    let mut pixels = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng.at(i as u64);
        let c = r.random_range(0..8u8);
        labels.push(c);
        for row in 0..8u8 {
            for _ in 0..8 {
                let base: u8 = if row == c { 200 } else { 20 };
                pixels.push(base.saturating_add(r.random_range(0..40)));
            }
        }
    }
    let (img, lab) = (dir.join("images.idx"), dir.join("labels.idx"));
    write_idx_images(&img, 8, 8, &pixels).unwrap();
    write_idx_labels(&lab, &labels).unwrap();
    (img, lab)
}

#[test]
fn idx_to_projected_training() {
    let dir = scratch_dir("pipeline");
    let (img, lab) = write_toy_idx(&dir, 700);
    let all = load_idx(&img, &lab).unwrap();
    assert_eq!((all.len(), all.feature_dim(), all.class_count()), (700, 64, 10));
    let (public, private) = split_public_private(
        &all,
        &SplitSpec {
            private_size: 500,
            public_size: 50,
            seed: 1,
        },
    )
    .unwrap();
    let rest: Vec<usize> = (0..150).collect();
    let test = all.subset(&rest).unwrap();

    let spec = ModelSpec::mlp(&[16]);
    let mut cfg = TrainConfig::new(Algorithm::PdpSgd, 4, 50, 0.5);
    cfg.clip = Some(1.0);
    cfg.sigma = 1.0;
    cfg.projection_dim = 10;
    cfg.projection_update_every = 2;
    cfg.checkpoint_every = Some(10);
    let a = train_with(Exec::Parallel, &cfg, &spec, &private, Some(&public), Some(&test)).unwrap();
    let b = train_with(Exec::Sequential, &cfg, &spec, &private, Some(&public), Some(&test)).unwrap();
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(a.epochs, b.epochs);

    assert_eq!(a.epochs.len(), 4);
    assert_eq!(a.subspace_refreshes, 20);
    let last = a.epochs.last().unwrap();
    assert!(last.train_acc.unwrap() > 0.5, "{last:?}");
    assert!(last.test_acc.unwrap() > 0.5, "{last:?}");
    assert!(a.ledger.as_ref().unwrap().epsilon > 0.0);

    let model = spec.build(64, 10).unwrap();
    let spectra = spectrum_trace(Exec::default(), &a.checkpoints, &model, &public, 20, 10).unwrap();
    assert_eq!(spectra.len(), a.checkpoints.len());
    for s in &spectra {
        assert!(s.summary.top_eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.summary.top_eigenvalues.iter().sum::<f64>() <= s.summary.trace * (1.0 + 1e-10));
    }

    // Oracle subspaces from the private set itself as a large held-out sample.
    let idx: Vec<usize> = (0..private.len()).collect();
    let oracle: Vec<_> = a
        .checkpoints
        .iter()
        .map(|c| {
            let gb = per_example_gradients_with(Exec::default(), &model, &c.params, &private, &idx).unwrap();
            top_k_eigenspace(&gb, 10).unwrap()
        })
        .collect();
    let dom = principal_dominance(&a.checkpoints, &oracle, &model, &private).unwrap();
    assert!(dom.rows.iter().all(|r| r.ratio.is_none_or(f64::is_finite)));
    assert!(dom.mean_ratio.is_some());

    assert!(norm2(&a.final_params.values).is_finite());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn warm_start_epochs_run_unprojected() {
    let dir = scratch_dir("warm");
    let (img, lab) = write_toy_idx(&dir, 300);
    let all = load_idx(&img, &lab).unwrap();
    let (public, private) = split_public_private(
        &all,
        &SplitSpec {
            private_size: 250,
            public_size: 30,
            seed: 2,
        },
    )
    .unwrap();
    let spec = ModelSpec::softmax_linear();
    let mut dp = TrainConfig::new(Algorithm::DpSgd, 3, 25, 0.3);
    dp.clip = Some(1.0);
    dp.sigma = 2.0;
    dp.skip_epoch_metrics = true;
    let mut pdp = dp.clone();
    pdp.algorithm = Algorithm::PdpSgd;
    pdp.projection_dim = 5;
    pdp.projection_start_epoch = 3;
    pdp.checkpoint_every = Some(10);
    dp.checkpoint_every = Some(10);
    let a = train_with(Exec::default(), &dp, &spec, &private, None, None).unwrap();
    let b = train_with(Exec::default(), &pdp, &spec, &private, Some(&public), None).unwrap();
    // 10 steps per epoch: the first two epochs are identical DP-SGD steps.
    assert_eq!(a.checkpoints[..3], b.checkpoints[..3]);
    assert_ne!(a.checkpoints[3], b.checkpoints[3]);
    assert_eq!(b.subspace_refreshes, 10);
    std::fs::remove_dir_all(&dir).ok();
}
