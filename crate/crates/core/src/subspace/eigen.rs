use serde::{Deserialize, Serialize};

use super::lanczos::lanczos_top_k;
use super::{second_moment_of, Subspace, SubspaceSource, SecondMomentOperator};
use crate::core_math::{orthonormalize_columns, symmetric_eigen, ColumnBlock, DenseMatrix};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::GradientBatch;

/// Eigenvalues at or below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenRoute {
    /// Gram route while `m ≤ gram_threshold`, Lanczos beyond.
    Auto,
    /// Eigen-decompose the `m × m` matrix `(1/m) GᵀG` and lift with `u ↦ Gu/‖Gu‖`.
    Gram,
    /// Lanczos with full re-orthogonalisation on the implicit operator.
    Lanczos,
    /// Dense `p × p` eigen-decomposition (small `p` only).
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub route: EigenRoute,
    pub gram_threshold: usize,
    pub exec: Exec,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            route: EigenRoute::Auto,
            gram_threshold: 512,
            exec: Exec::default(),
        }
    }
}

/// Top-`k` eigenspace of `M = (1/m) Σ g_i g_iᵀ` with its eigenvalues.
pub fn top_k_eigenspace(gb: &GradientBatch, k: usize) -> Result<Subspace> {
    top_k_eigenspace_with(gb, k, &EigenOptions::default())
}

pub fn top_k_eigenspace_with(gb: &GradientBatch, k: usize, opts: &EigenOptions) -> Result<Subspace> {
    let g = gb.grads();
    let (p, m) = (g.rows(), g.cols());
    if k == 0 || k > p.min(m) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in [1, min(p = {p}, m = {m})]"
        )));
    }
    let route = match opts.route {
        EigenRoute::Auto if m <= opts.gram_threshold => EigenRoute::Gram,
        EigenRoute::Auto => EigenRoute::Lanczos,
        r => r,
    };
    // (values descending, vectors) for at least the leading k+1 pairs when available.
    let (values, vectors) = match route {
        EigenRoute::Gram => gram_route(g, k, opts.exec)?,
        EigenRoute::Lanczos => {
            let op = SecondMomentOperator::new(g).with_exec(opts.exec);
            let r = lanczos_top_k(|v| op.apply(v), p, (k + 1).min(p), 1e-11)?;
            (r.values, r.vectors)
        }
        EigenRoute::Dense => {
            let e = symmetric_eigen(&second_moment_of(g, usize::MAX)?)?;
            (e.values, e.vectors)
        }
        EigenRoute::Auto => unreachable!(),
    };

    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = values.iter().take_while(|&&v| v > RANK_TOL * top && v > 0.0).count();
    let keep = k.min(rank);
    let cols: Vec<Vec<f64>> = (0..keep).map(|i| vectors.column(i).to_vec()).collect();
    let mut basis = orthonormalize_columns(&ColumnBlock::from_columns(p, &cols)?);
    apply_sign_convention(&mut basis);
    let kept = basis.cols();
    let eig: Vec<f64> = values[..kept].to_vec();
    let next = if kept < k {
        0.0
    } else {
        values.get(k).copied().unwrap_or(0.0).max(0.0)
    };
    let mut sub = Subspace::from_basis(basis, SubspaceSource::PublicEigen)?.with_spectrum(eig, next);
    sub.rank_deficient = kept < k;
    Ok(sub)
}

fn gram_route(g: &ColumnBlock, k: usize, exec: Exec) -> Result<(Vec<f64>, ColumnBlock)> {
    let (p, m) = (g.rows(), g.cols());
    let inv = 1.0 / m as f64;
    let rows: Vec<Vec<f64>> = exec.map(m, |i| {
        (0..m)
            .map(|j| crate::core_math::dot(g.column(i), g.column(j)) * inv)
            .collect()
    });
    let mut gram = DenseMatrix::from_rows(&rows)?;
    // Symmetrise exactly; dot(a, b) and dot(b, a) agree up to rounding only.
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (gram.get(i, j) + gram.get(j, i));
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let eig = symmetric_eigen(&gram)?;
    let lift = (k + 1).min(m);
    let mut cols = Vec::with_capacity(lift);
    for i in 0..lift {
        let mut v = g.mul(eig.vectors.column(i));
        let n = crate::core_math::norm2(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        cols.push(v);
    }
    let values = eig.values.iter().take(lift).copied().collect();
    Ok((values, ColumnBlock::from_columns(p, &cols)?))
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn apply_sign_convention(basis: &mut ColumnBlock) {
    for j in 0..basis.cols() {
        let col = basis.column_mut(j);
        let (idx, _) = col
            .iter()
            .enumerate()
            .fold((0, -1.0), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
        if col[idx] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
}
