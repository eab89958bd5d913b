//! Public-gradient second moments, top-k eigenspaces, random projections and
//! subspace distances.

mod eigen;
mod lanczos;

pub use eigen::{top_k_eigenspace, top_k_eigenspace_with, EigenOptions, EigenRoute};
pub use lanczos::{lanczos_top_k, LanczosResult};

use serde::{Deserialize, Serialize};

use crate::core_math::{
    dot, orthonormalize_columns, standard_normal, symmetric_eigen, ColumnBlock, DenseMatrix,
    RngStream,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::GradientBatch;

/// Largest `p` for which `second_moment` will materialise a `p × p` matrix.
pub const DEFAULT_EXPLICIT_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceSource {
    PublicEigen,
    Random,
    Oracle,
}

/// Orthonormal basis `V̂` (p × k) of a subspace of parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: ColumnBlock,
    /// Top eigenvalues, descending (absent for random projections).
    eigenvalues: Option<Vec<f64>>,
    /// `λ_{k+1}` of the source matrix (0 when its rank is at most k).
    next_eigenvalue: Option<f64>,
    pub source: SubspaceSource,
    pub step_created: u64,
    /// Set when fewer than the requested `k` directions had non-zero eigenvalue.
    pub rank_deficient: bool,
}

impl Subspace {
    /// Wraps an orthonormal basis; the orthonormality invariant is checked.
    pub fn from_basis(basis: ColumnBlock, source: SubspaceSource) -> Result<Self> {
        let g = basis.t_mul_block(&basis);
        for i in 0..basis.cols() {
            for j in 0..basis.cols() {
                let e = if i == j { 1.0 } else { 0.0 };
                if (g.get(i, j) - e).abs() > 1e-8 {
                    return Err(Error::InvalidArgument("basis is not orthonormal".into()));
                }
            }
        }
        Ok(Self {
            basis,
            eigenvalues: None,
            next_eigenvalue: None,
            source,
            step_created: 0,
            rank_deficient: false,
        })
    }

    /// The full space `ℝ^p` with the standard basis.
    pub fn complete(p: usize) -> Self {
        let mut basis = ColumnBlock::zeros(p, p);
        for i in 0..p {
            basis.column_mut(i)[i] = 1.0;
        }
        Self {
            basis,
            eigenvalues: None,
            next_eigenvalue: None,
            source: SubspaceSource::Oracle,
            step_created: 0,
            rank_deficient: false,
        }
    }

    pub fn basis(&self) -> &ColumnBlock {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    pub fn next_eigenvalue(&self) -> Option<f64> {
        self.next_eigenvalue
    }

    /// `λ_k − λ_{k+1}` of the source matrix, when known.
    pub fn eigen_gap(&self) -> Option<f64> {
        let ev = self.eigenvalues.as_ref()?;
        Some(ev.last().copied().unwrap_or(0.0) - self.next_eigenvalue.unwrap_or(0.0))
    }

    /// Largest deviation of `V̂ᵀV̂` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.basis.t_mul_block(&self.basis);
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - e).abs());
            }
        }
        worst
    }

    pub(crate) fn with_spectrum(mut self, eigenvalues: Vec<f64>, next: f64) -> Self {
        self.eigenvalues = Some(eigenvalues);
        self.next_eigenvalue = Some(next);
        self
    }
}

/// `M = (1/m) Σ g_i g_iᵀ` as an operator that never forms the `p × p` matrix.
#[derive(Debug, Clone, Copy)]
pub struct SecondMomentOperator<'a> {
    grads: &'a ColumnBlock,
    exec: Exec,
}

impl<'a> SecondMomentOperator<'a> {
    pub fn new(grads: &'a ColumnBlock) -> Self {
        Self {
            grads,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn dim(&self) -> usize {
        self.grads.rows()
    }

    /// `M v`. Each output row block sums over the columns in index order, so
    /// the result is independent of scheduling.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.grads.cols();
        let inv = 1.0 / m as f64;
        let coeffs: Vec<f64> = self
            .exec
            .map(m, |j| dot(self.grads.column(j), v) * inv);
        let p = self.grads.rows();
        let mut out = vec![0.0; p];
        const ROWS: usize = 4096;
        self.exec.for_each_chunk(&mut out, ROWS, |b, chunk| {
            let start = b * ROWS;
            for (j, c) in coeffs.iter().enumerate() {
                let col = &self.grads.column(j)[start..start + chunk.len()];
                for (o, g) in chunk.iter_mut().zip(col) {
                    *o += c * g;
                }
            }
        });
        out
    }

    /// `trace(M) = (1/m) Σ ‖g_i‖²`.
    pub fn trace(&self) -> f64 {
        self.grads.columns().map(|c| dot(c, c)).sum::<f64>() / self.grads.cols() as f64
    }
}

/// Explicit second-moment matrix; refused when `p > max_dim`.
pub fn second_moment(gb: &GradientBatch, max_dim: usize) -> Result<DenseMatrix> {
    second_moment_of(gb.grads(), max_dim)
}

pub(crate) fn second_moment_of(g: &ColumnBlock, max_dim: usize) -> Result<DenseMatrix> {
    let p = g.rows();
    let m = g.cols();
    if m == 0 {
        return Err(Error::InvalidArgument("empty gradient batch".into()));
    }
    if p > max_dim {
        return Err(Error::Capacity(format!(
            "explicit {p}x{p} second moment exceeds limit {max_dim}"
        )));
    }
    let inv = 1.0 / m as f64;
    let mut out = DenseMatrix::zeros(p, p);
    for col in g.columns() {
        for a in 0..p {
            let ca = col[a] * inv;
            if ca == 0.0 {
                continue;
            }
            for (b, cb) in col.iter().enumerate().skip(a) {
                out.set(a, b, out.get(a, b) + ca * cb);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            out.set(a, b, out.get(b, a));
        }
    }
    Ok(out)
}

/// `k` Gaussian directions in `ℝ^p`, orthonormalised.
pub fn random_projection(p: usize, k: usize, seed: u64) -> Result<Subspace> {
    random_projection_at(p, k, &RngStream::new(seed, "projection"), 0)
}

pub(crate) fn random_projection_at(p: usize, k: usize, rng: &RngStream, index: u64) -> Result<Subspace> {
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, {p}]")));
    }
    let mut r = rng.at(index);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut basis = ColumnBlock::zeros(p, 0);
    while basis.cols() < k {
        cols.push((0..p).map(|_| standard_normal(&mut r)).collect());
        basis = orthonormalize_columns(&ColumnBlock::from_columns(p, &cols)?);
        if basis.cols() < cols.len() {
            cols.pop();
        }
    }
    Ok(Subspace {
        basis,
        eigenvalues: None,
        next_eigenvalue: None,
        source: SubspaceSource::Random,
        step_created: 0,
        rank_deficient: false,
    })
}

/// `V̂ (V̂ᵀ x)`.
pub fn project(sub: &Subspace, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != sub.dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.dim(),
            got: x.len(),
        });
    }
    Ok(sub.basis.mul(&sub.basis.t_mul(x)))
}

/// Spectral norm of `AAᵀ − BBᵀ` for equal-rank subspaces, i.e. the sine of
/// the largest principal angle.
///
/// Evaluated as `σ_max((I − AAᵀ)B)` through the `k × k` Gram matrix of the
/// residual. This equals `√(1 − σ_min(AᵀB)²)` but keeps full relative
/// accuracy when the subspaces nearly coincide.
pub fn subspace_distance(a: &Subspace, b: &Subspace) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.rank() != b.rank() {
        return Err(Error::InvalidArgument(format!(
            "subspace ranks differ: {} vs {}",
            a.rank(),
            b.rank()
        )));
    }
    let k = b.rank();
    if k == 0 {
        return Ok(0.0);
    }
    let mut resid = b.basis.clone();
    for j in 0..k {
        let col = b.basis.column(j);
        let proj = a.basis.mul(&a.basis.t_mul(col));
        for (r, pj) in resid.column_mut(j).iter_mut().zip(proj) {
            *r -= pj;
        }
    }
    let gram = resid.t_mul_block(&resid);
    let top = symmetric_eigen(&gram)?.values[0].max(0.0);
    Ok(top.sqrt().min(1.0))
}

/// Eigen-gap `λ_k − λ_{k+1}` (1-based `k`), with `λ_{k+1} = 0` past the end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenGap {
    pub gap: f64,
    pub degenerate: bool,
}

pub fn eigen_gap(eigenvalues: &[f64], k: usize) -> Result<EigenGap> {
    if k == 0 || k > eigenvalues.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside [1, {}]",
            eigenvalues.len()
        )));
    }
    let lk = eigenvalues[k - 1];
    let next = eigenvalues.get(k).copied().unwrap_or(0.0);
    let gap = (lk - next).max(0.0);
    let scale = eigenvalues[0].abs().max(f64::MIN_POSITIVE);
    Ok(EigenGap {
        gap,
        degenerate: gap <= 1e-12 * scale,
    })
}

/// Leading eigenvalues of `M`, gap at `k` and `trace(M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub top_eigenvalues: Vec<f64>,
    pub eigen_gap_at_k: f64,
    pub gap_degenerate: bool,
    pub trace: f64,
}

/// Top `top` eigenvalues of the second moment of `gb` plus its gap at `k`.
pub fn spectrum_summary(gb: &GradientBatch, top: usize, k: usize) -> Result<SpectrumSummary> {
    if k == 0 || k > top {
        return Err(Error::InvalidArgument(format!("gap index {k} outside [1, {top}]")));
    }
    let sub = top_k_eigenspace(gb, top.min(gb.dim()).min(gb.count()))?;
    let mut values = sub.eigenvalues().unwrap_or(&[]).to_vec();
    values.resize(top, 0.0);
    let gap = eigen_gap(&values, k)?;
    Ok(SpectrumSummary {
        top_eigenvalues: values,
        eigen_gap_at_k: gap.gap,
        gap_degenerate: gap.degenerate,
        trace: SecondMomentOperator::new(gb.grads()).trace(),
    })
}

#[cfg(test)]
mod tests;
