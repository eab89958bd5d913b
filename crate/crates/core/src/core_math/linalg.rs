use super::{axpy, dot, norm2, ColumnBlock, DenseMatrix, RngStream};
use crate::error::{Error, Result};

pub const DEFAULT_POWER_TOL: f64 = 1e-8;
pub const DEFAULT_POWER_MAX_ITER: usize = 20_000;

/// Largest singular value of `a` by power iteration on `AᵀA` (or `A²` for
/// symmetric input) from a seeded random start.
///
/// Stops once the eigen-residual of the iterate drops below `tol` relative to
/// the current estimate, which bounds the relative error of the returned value
/// well below `tol`.
pub fn spectral_norm(a: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {tol} must be positive")));
    }
    let n = a.cols();
    if n == 0 || a.rows() == 0 || a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let symmetric = a.is_symmetric(0.0);
    let apply = |v: &[f64]| -> Vec<f64> {
        let av = a.matvec(v);
        if symmetric {
            a.matvec(&av)
        } else {
            a.matvec_t(&av)
        }
    };

    let mut rng = RngStream::new(0x5eed, "power-iteration").at(n as u64);
    let mut v: Vec<f64> = (0..n).map(|_| super::standard_normal(&mut rng)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        lambda = dot(&v, &w);
        let mut r = w.clone();
        axpy(-lambda, &v, &mut r);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        if norm2(&r) <= tol * lambda.abs() {
            return Ok(lambda.max(0.0).sqrt());
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate: lambda.max(0.0).sqrt(),
    })
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors, column `i` paired with `values[i]`.
    pub vectors: ColumnBlock,
}

/// Dense symmetric eigensolver (Householder tridiagonalisation + implicit QR).
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    let eig = nalgebra::SymmetricEigen::new(a.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the solver's own order for exact ties.
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok(SymmetricEigen {
        values,
        vectors: ColumnBlock::from_columns(n, &cols)?,
    })
}

/// Cyclic Jacobi eigensolver. Slow but simple; kept as an independent
/// reference for checking the production eigen routes on small matrices.
pub fn jacobi_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let mkp = row[p];
                    let mkq = row[q];
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                // Rows p and q are updated together.
                #[allow(clippy::needless_range_loop)]
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|r| v[r][i]).collect())
        .collect();
    Ok(SymmetricEigen {
        values,
        vectors: ColumnBlock::from_columns(n, &cols)?,
    })
}

/// Thin QR by modified Gram-Schmidt with one re-orthogonalisation pass.
///
/// Columns that become numerically dependent (norm below `1e-12` of their
/// original norm) are dropped, so the result may have fewer columns.
pub fn orthonormalize_columns(block: &ColumnBlock) -> ColumnBlock {
    let p = block.rows();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(block.cols());
    for col in block.columns() {
        let orig = norm2(col);
        if orig == 0.0 {
            continue;
        }
        let mut v = col.to_vec();
        for _pass in 0..2 {
            for q in &kept {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let nv = norm2(&v);
        if nv <= 1e-12 * orig {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        kept.push(v);
    }
    ColumnBlock::from_columns(p, &kept).expect("columns share length")
}
