//! Dense linear algebra, seeded random streams and numerical oracles shared by
//! the rest of the crate. Everything accumulates in `f64`.

mod diff;
mod linalg;
mod matrix;
mod rng;

pub use diff::finite_diff_grad;
pub use linalg::{
    jacobi_eigen, orthonormalize_columns, spectral_norm, symmetric_eigen, SymmetricEigen,
    DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL,
};
pub use matrix::{ColumnBlock, DenseMatrix};
pub use rng::{gaussian_vector, standard_normal, RngStream};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}
