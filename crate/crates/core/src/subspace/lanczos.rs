use crate::core_math::{axpy, dot, norm2, standard_normal, symmetric_eigen, ColumnBlock, DenseMatrix, RngStream};
use crate::error::Result;

/// Leading Ritz pairs of a symmetric PSD operator.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Ritz values, descending.
    pub values: Vec<f64>,
    pub vectors: ColumnBlock,
    pub krylov_dim: usize,
}

/// Lanczos with full re-orthogonalisation for the `want` largest eigenpairs of
/// the `dim`-dimensional symmetric operator `apply`.
///
/// The Krylov space grows until every wanted Ritz pair has residual
/// `β_j |s_{j,i}| ≤ tol · θ₁`, the recurrence breaks down (an invariant
/// subspace was found), or the space fills `ℝ^dim`. The start vector is drawn
/// from a fixed stream, so results are reproducible.
pub fn lanczos_top_k<F>(apply: F, dim: usize, want: usize, tol: f64) -> Result<LanczosResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let want = want.min(dim).max(1);
    let mut rng = RngStream::new(0x1a2c_0500, "lanczos-start").at(dim as u64);
    let mut q: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
    let n0 = norm2(&q);
    q.iter_mut().for_each(|x| *x /= n0);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j]);
        let a = dot(&basis[j], &w);
        alphas.push(a);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        for _pass in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm2(&w);
        let m = alphas.len();
        let check = m >= want && (m.is_multiple_of(4) || m == dim || b == 0.0);
        let (theta, s) = if check || m == dim {
            ritz(&alphas, &betas)?
        } else {
            (Vec::new(), DenseMatrix::zeros(0, 0))
        };
        let scale = theta.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
        let breakdown = b <= 1e-13 * scale.max(alphas.iter().fold(0.0f64, |x, y| x.max(y.abs())));
        let converged = !theta.is_empty()
            && (0..want.min(m)).all(|i| (b * s.get(m - 1, i)).abs() <= tol * scale);
        if m == dim || breakdown || converged {
            let (theta, s) = if theta.is_empty() { ritz(&alphas, &betas)? } else { (theta, s) };
            let keep = want.min(m);
            let mut cols = Vec::with_capacity(keep);
            for i in 0..keep {
                let mut v = vec![0.0; dim];
                for (r, qv) in basis.iter().enumerate().take(m) {
                    axpy(s.get(r, i), qv, &mut v);
                }
                cols.push(v);
            }
            return Ok(LanczosResult {
                values: theta[..keep].to_vec(),
                vectors: ColumnBlock::from_columns(dim, &cols)?,
                krylov_dim: m,
            });
        }
        betas.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
}

/// Eigen-decomposition of the tridiagonal matrix; columns of `s` are Ritz
/// coordinates in the Lanczos basis, sorted by descending Ritz value.
fn ritz(alphas: &[f64], betas: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
    let m = alphas.len();
    let mut t = DenseMatrix::zeros(m, m);
    for i in 0..m {
        t.set(i, i, alphas[i]);
        if i + 1 < m {
            t.set(i, i + 1, betas[i]);
            t.set(i + 1, i, betas[i]);
        }
    }
    let e = symmetric_eigen(&t)?;
    let mut s = DenseMatrix::zeros(m, m);
    for c in 0..m {
        for r in 0..m {
            s.set(r, c, e.vectors.column(c)[r]);
        }
    }
    Ok((e.values, s))
}
