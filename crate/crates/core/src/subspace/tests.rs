use super::*;
use crate::core_math::{gaussian_vector, jacobi_eigen, norm2, symmetric_eigen};
use proptest::prelude::*;

fn batch(p: usize, cols: &[Vec<f64>]) -> GradientBatch {
    GradientBatch::unclipped(ColumnBlock::from_columns(p, cols).unwrap())
}

fn random_batch(p: usize, m: usize, seed: u64) -> GradientBatch {
    let g = gaussian_vector(&RngStream::new(seed, "test"), 0, p * m, 1.0).unwrap();
    GradientBatch::unclipped(ColumnBlock::from_flat(p, m, g).unwrap())
}

/// Top-k eigenspace from the independent Jacobi solver on the explicit matrix.
fn jacobi_subspace(gb: &GradientBatch, k: usize) -> (Subspace, Vec<f64>) {
    let e = jacobi_eigen(&second_moment(gb, 1000).unwrap()).unwrap();
    let cols: Vec<Vec<f64>> = (0..k).map(|i| e.vectors.column(i).to_vec()).collect();
    let basis = orthonormalize_columns(&ColumnBlock::from_columns(gb.dim(), &cols).unwrap());
    (Subspace::from_basis(basis, SubspaceSource::Oracle).unwrap(), e.values)
}

fn unit(p: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; p];
    v[i] = 1.0;
    v
}

fn line(v: Vec<f64>) -> Subspace {
    let p = v.len();
    Subspace::from_basis(ColumnBlock::from_columns(p, &[v]).unwrap(), SubspaceSource::Oracle).unwrap()
}

#[test]
fn second_moment_small_cases() {
    let m = second_moment(&batch(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]), 10).unwrap();
    assert_eq!(m, DenseMatrix::from_diag(&[0.5, 0.5]));
    let g = vec![1.0, -2.0, 0.5];
    let m = second_moment(&batch(3, std::slice::from_ref(&g)), 10).unwrap();
    assert!((m.trace() - dot(&g, &g)).abs() < 1e-15);
    assert_eq!(m.get(0, 1), -2.0);
    assert!(matches!(second_moment(&batch(3, &[g]), 2), Err(Error::Capacity(_))));
}

#[test]
fn clipped_second_moment_has_bounded_norm() {
    let gb = crate::models::clip_gradients(&random_batch(20, 15, 1), 1.0).unwrap();
    let m = second_moment(&gb, 100).unwrap();
    let n = crate::core_math::spectral_norm(&m, 1e-10, 100_000).unwrap();
    assert!(n <= 1.0 + 1e-12);
}

#[test]
fn implicit_operator_matches_explicit() {
    let gb = random_batch(30, 7, 2);
    let m = second_moment(&gb, 100).unwrap();
    let v: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
    let a = SecondMomentOperator::new(gb.grads()).apply(&v);
    let b = m.matvec(&v);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!((SecondMomentOperator::new(gb.grads()).trace() - m.trace()).abs() < 1e-12);
}

#[test]
fn diagonal_example() {
    let gb = batch(3, &[vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    // M = diag(2, 0.5, 0)
    let s1 = top_k_eigenspace(&gb, 1).unwrap();
    assert_eq!(s1.basis().column(0), &[1.0, 0.0, 0.0]);
    assert!((s1.eigenvalues().unwrap()[0] - 2.0).abs() < 1e-14);
    assert!((s1.eigen_gap().unwrap() - 1.5).abs() < 1e-14);
    let s2 = top_k_eigenspace(&gb, 2).unwrap();
    let ev = s2.eigenvalues().unwrap();
    assert!((ev[0] - 2.0).abs() < 1e-14 && (ev[1] - 0.5).abs() < 1e-14);
    let x = [0.3, -0.7, 2.0];
    let px = project(&s2, &x).unwrap();
    assert!((px[0] - 0.3).abs() < 1e-15 && (px[1] + 0.7).abs() < 1e-15 && px[2].abs() < 1e-15);
    assert!(!s2.rank_deficient);
}

#[test]
fn gram_route_matches_dense_oracle() {
    let gb = random_batch(60, 30, 3);
    for k in [1, 5, 12] {
        let s = top_k_eigenspace_with(
            &gb,
            k,
            &EigenOptions {
                route: EigenRoute::Gram,
                ..Default::default()
            },
        )
        .unwrap();
        let (oracle, values) = jacobi_subspace(&gb, k);
        assert!(subspace_distance(&s, &oracle).unwrap() < 1e-8);
        for (a, b) in s.eigenvalues().unwrap().iter().zip(&values) {
            assert!((a - b).abs() < 1e-10 * values[0]);
        }
        assert!(s.orthonormality_error() <= 1e-8);
    }
}

#[test]
fn all_routes_agree() {
    // m > p exercises the Lanczos and Gram routes on a full-rank M.
    for (p, m, seed) in [(40, 25, 4), (25, 60, 5), (80, 100, 6)] {
        let gb = random_batch(p, m, seed);
        let k = 6;
        let routes = [EigenRoute::Gram, EigenRoute::Lanczos, EigenRoute::Dense];
        let subs: Vec<Subspace> = routes
            .iter()
            .map(|&route| {
                top_k_eigenspace_with(&gb, k, &EigenOptions { route, ..Default::default() }).unwrap()
            })
            .collect();
        let (oracle, _) = jacobi_subspace(&gb, k);
        for s in &subs {
            assert!(subspace_distance(s, &oracle).unwrap() < 1e-8, "p={p} m={m}");
            assert!((s.eigen_gap().unwrap() - subs[2].eigen_gap().unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn auto_route_switches_to_lanczos_above_threshold() {
    let gb = random_batch(30, 40, 7);
    let opts = EigenOptions {
        gram_threshold: 10,
        ..Default::default()
    };
    let a = top_k_eigenspace_with(&gb, 3, &opts).unwrap();
    let b = top_k_eigenspace(&gb, 3).unwrap();
    assert!(subspace_distance(&a, &b).unwrap() < 1e-8);
}

#[test]
fn rank_deficiency_flagged() {
    let gb = batch(4, &[vec![1.0, 0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
    let s = top_k_eigenspace(&gb, 3).unwrap();
    assert!(s.rank_deficient);
    assert_eq!(s.rank(), 2);
    assert!(top_k_eigenspace(&gb, 0).is_err());
    assert!(top_k_eigenspace(&gb, 4).is_err());
}

#[test]
fn repeated_calls_are_bit_identical() {
    let gb = random_batch(50, 20, 8);
    let a = top_k_eigenspace(&gb, 4).unwrap();
    let b = top_k_eigenspace(&gb, 4).unwrap();
    assert_eq!(a, b);
    let seq = top_k_eigenspace_with(
        &gb,
        4,
        &EigenOptions {
            exec: Exec::Sequential,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a, seq);
}

#[test]
fn random_projection_properties() {
    let s = random_projection(30, 7, 1).unwrap();
    assert!(s.orthonormality_error() <= 1e-8);
    assert_eq!(s.source, SubspaceSource::Random);
    let full = random_projection(20, 20, 2).unwrap();
    let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
    let px = project(&full, &x).unwrap();
    let err: f64 = px.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 1e-8 * norm2(&x));
    assert!(random_projection(5, 6, 1).is_err());
}

#[test]
fn random_projection_energy_is_k_over_p() {
    let (p, k) = (400, 100);
    let x: Vec<f64> = {
        let v: Vec<f64> = (0..p).map(|i| ((i * i) as f64).sin()).collect();
        let n = norm2(&v);
        v.into_iter().map(|a| a / n).collect()
    };
    let mean: f64 = (0..200)
        .map(|seed| norm2(&project(&random_projection(p, k, seed).unwrap(), &x).unwrap()).powi(2))
        .sum::<f64>()
        / 200.0;
    assert!((mean - 0.25).abs() <= 0.025, "{mean}");
}

#[test]
fn projection_examples() {
    let s = line(unit(2, 0));
    assert_eq!(project(&s, &[1.5, -0.5]).unwrap(), vec![1.5, 0.0]);
    assert_eq!(project(&s, &[0.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    assert!(matches!(project(&s, &[1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn distance_examples() {
    let e1 = line(unit(2, 0));
    let e2 = line(unit(2, 1));
    let diag = line(vec![std::f64::consts::FRAC_1_SQRT_2; 2]);
    assert_eq!(subspace_distance(&e1, &e1).unwrap(), 0.0);
    assert!((subspace_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
    let d = subspace_distance(&e1, &diag).unwrap();
    assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    // Cross-check against the eigenvalues of the 2x2 projector difference.
    let diff = DenseMatrix::from_rows(&[vec![0.5, -0.5], vec![-0.5, -0.5]]).unwrap();
    let ev = symmetric_eigen(&diff).unwrap().values;
    assert!((ev[0].abs().max(ev[1].abs()) - d).abs() < 1e-12);
    let plane = Subspace::complete(2);
    assert!(subspace_distance(&e1, &plane).is_err());
}

#[test]
fn eigen_gap_examples() {
    let g = eigen_gap(&[2.0, 0.5, 0.0], 1).unwrap();
    assert_eq!(g.gap, 1.5);
    assert!(!g.degenerate);
    assert_eq!(eigen_gap(&[2.0, 0.5], 2).unwrap().gap, 0.5);
    let d = eigen_gap(&[1.0, 0.7, 0.7], 2).unwrap();
    assert_eq!(d.gap, 0.0);
    assert!(d.degenerate);
    assert!(eigen_gap(&[1.0], 2).is_err());
    assert!(eigen_gap(&[1.0], 0).is_err());
}

#[test]
fn spectrum_summary_trace_bounds_top_sum() {
    let gb = random_batch(30, 10, 9);
    let s = spectrum_summary(&gb, 10, 3).unwrap();
    let sum: f64 = s.top_eigenvalues.iter().sum();
    assert!((s.trace - sum).abs() <= 1e-8 * s.trace);
    assert!(s.top_eigenvalues.windows(2).all(|w| w[0] >= w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent_non_expanding_and_pythagorean(
        seed in 0u64..10_000, p in 2usize..40, kf in 0.0f64..1.0,
        x in proptest::collection::vec(-10.0f64..10.0, 40)
    ) {
        let k = 1 + ((p - 1) as f64 * kf) as usize;
        let s = random_projection(p, k, seed).unwrap();
        let x = &x[..p];
        let px = project(&s, x).unwrap();
        let ppx = project(&s, &px).unwrap();
        for (a, b) in px.iter().zip(&ppx) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + norm2(x)));
        }
        prop_assert!(norm2(&px) <= norm2(x) * (1.0 + 1e-12) + 1e-12);
        let resid: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
        let lhs = dot(x, x);
        let rhs = dot(&px, &px) + dot(&resid, &resid);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(1e-300));
    }

    #[test]
    fn gram_route_agrees_with_jacobi(seed in 0u64..1000, p in 3usize..40, m in 2usize..30) {
        let gb = random_batch(p, m, seed);
        let k = 1 + (seed as usize) % p.min(m).min(4);
        let s = top_k_eigenspace(&gb, k).unwrap();
        let (oracle, values) = jacobi_subspace(&gb, k);
        // Only meaningful when the k-th gap is not vanishing.
        if values[k - 1] - values.get(k).copied().unwrap_or(0.0) > 1e-6 * values[0] {
            prop_assert!(subspace_distance(&s, &oracle).unwrap() < 1e-6);
        }
        prop_assert!(s.orthonormality_error() <= 1e-8);
    }
}
