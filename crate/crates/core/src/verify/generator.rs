use crate::core_math::{standard_normal, symmetric_eigen, ColumnBlock, DenseMatrix, RngStream};
use crate::error::{Error, Result};
use crate::subspace::{random_projection, Subspace, SubspaceSource};

/// A source of i.i.d. gradient vectors with a known second moment `Σ = E[g gᵀ]`.
pub trait GradientGenerator: Sync {
    fn dim(&self) -> usize;

    /// `m` draws as columns, from draw `index` of `rng`.
    fn sample(&self, rng: &RngStream, index: u64, m: usize) -> ColumnBlock;

    /// The population second moment.
    fn sigma(&self) -> DenseMatrix;
}

/// `g = V diag(√λ) z` with `z ~ N(0, I_r)` and orthonormal `V`, so
/// `Σ = V diag(λ) Vᵀ` is known exactly along with its eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGenerator {
    frame: ColumnBlock,
    eigenvalues: Vec<f64>,
    scale: f64,
}

impl GaussianGenerator {
    /// `eigenvalues` must be positive and non-increasing, one per frame column.
    pub fn new(frame: ColumnBlock, eigenvalues: Vec<f64>) -> Result<Self> {
        if frame.cols() != eigenvalues.len() || eigenvalues.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: frame.cols(),
                got: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("generator eigenvalues must be positive".into()));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("generator eigenvalues must be non-increasing".into()));
        }
        // Validates orthonormality.
        Subspace::from_basis(frame.clone(), SubspaceSource::Oracle)?;
        Ok(Self {
            frame,
            eigenvalues,
            scale: 1.0,
        })
    }

    /// Eigenvectors along the first coordinate axes.
    pub fn axis_aligned(p: usize, eigenvalues: Vec<f64>) -> Result<Self> {
        let cols: Vec<Vec<f64>> = (0..eigenvalues.len().min(p))
            .map(|i| {
                let mut e = vec![0.0; p];
                e[i] = 1.0;
                e
            })
            .collect();
        if eigenvalues.len() > p || cols.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} eigenvalues do not fit in dimension {p}",
                eigenvalues.len()
            )));
        }
        Self::new(ColumnBlock::from_columns(p, &cols)?, eigenvalues)
    }

    /// Eigenvectors in a random orthonormal frame drawn from `seed`.
    pub fn random_frame(p: usize, eigenvalues: Vec<f64>, seed: u64) -> Result<Self> {
        let sub = random_projection(p, eigenvalues.len(), seed)?;
        Self::new(sub.basis().clone(), eigenvalues)
    }

    /// Same distribution with every draw multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            scale: self.scale * c,
            ..self.clone()
        }
    }

    /// Eigenvalues of `Σ` (descending, zero beyond the rank omitted).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l * self.scale * self.scale).collect()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ_k − λ_{k+1}` of `Σ`, with `λ_{r+1} = 0`.
    pub fn gap(&self, k: usize) -> f64 {
        let l = self.eigenvalues();
        l[k - 1] - l.get(k).copied().unwrap_or(0.0)
    }

    /// Exact top-`k` eigenspace of `Σ`.
    pub fn top_subspace(&self, k: usize) -> Result<Subspace> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} must lie in [1, rank = {}]",
                self.rank()
            )));
        }
        let cols: Vec<Vec<f64>> = (0..k).map(|j| self.frame.column(j).to_vec()).collect();
        Subspace::from_basis(ColumnBlock::from_columns(self.dim(), &cols)?, SubspaceSource::Oracle)
    }
}

impl GradientGenerator for GaussianGenerator {
    fn dim(&self) -> usize {
        self.frame.rows()
    }

    fn sample(&self, rng: &RngStream, index: u64, m: usize) -> ColumnBlock {
        let mut r = rng.at(index);
        let roots: Vec<f64> = self.eigenvalues.iter().map(|l| l.sqrt() * self.scale).collect();
        let mut out = ColumnBlock::zeros(self.dim(), m);
        for i in 0..m {
            let col = out.column_mut(i);
            for (j, s) in roots.iter().enumerate() {
                let z = standard_normal(&mut r) * s;
                crate::core_math::axpy(z, self.frame.column(j), col);
            }
        }
        out
    }

    fn sigma(&self) -> DenseMatrix {
        let p = self.dim();
        let mut s = DenseMatrix::zeros(p, p);
        for (j, l) in self.eigenvalues().iter().enumerate() {
            let v = self.frame.column(j);
            for a in 0..p {
                if v[a] == 0.0 {
                    continue;
                }
                for b in 0..p {
                    s.set(a, b, s.get(a, b) + l * v[a] * v[b]);
                }
            }
        }
        s
    }
}

/// Uniform draws (with replacement) from a fixed pool of vectors. The pool's
/// own second moment is the population `Σ`, which makes a large pool a
/// plug-in reference for generators without an analytic `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolGenerator {
    pool: ColumnBlock,
}

impl PoolGenerator {
    pub fn new(pool: ColumnBlock) -> Result<Self> {
        if pool.cols() == 0 {
            return Err(Error::InvalidArgument("empty gradient pool".into()));
        }
        Ok(Self { pool })
    }

    pub fn pool(&self) -> &ColumnBlock {
        &self.pool
    }
}

impl GradientGenerator for PoolGenerator {
    fn dim(&self) -> usize {
        self.pool.rows()
    }

    fn sample(&self, rng: &RngStream, index: u64, m: usize) -> ColumnBlock {
        use rand::Rng;
        let mut r = rng.at(index);
        let mut out = ColumnBlock::zeros(self.dim(), m);
        for i in 0..m {
            let j = r.random_range(0..self.pool.cols());
            out.column_mut(i).copy_from_slice(self.pool.column(j));
        }
        out
    }

    fn sigma(&self) -> DenseMatrix {
        crate::subspace::second_moment_of(&self.pool, usize::MAX).expect("unbounded size")
    }
}

/// Exact `‖A‖₂` of a symmetric matrix from a full eigen-decomposition.
pub fn symmetric_norm(a: &DenseMatrix) -> Result<f64> {
    let e = symmetric_eigen(a)?;
    Ok(e.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_sigma_matches_frame() {
        let g = GaussianGenerator::random_frame(12, vec![3.0, 2.0, 0.5], 4).unwrap();
        let s = g.sigma();
        let e = symmetric_eigen(&s).unwrap();
        for (a, b) in e.values.iter().zip([3.0, 2.0, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.gap(2) - 1.5).abs() < 1e-15 && (g.gap(3) - 0.5).abs() < 1e-15);
        assert!((g.scaled(2.0).sigma().trace() - 4.0 * 5.5).abs() < 1e-12);
    }

    #[test]
    fn gaussian_draws_have_second_moment_sigma() {
        let g = GaussianGenerator::axis_aligned(4, vec![2.0, 1.0]).unwrap();
        let draws = g.sample(&RngStream::new(1, "t"), 0, 20000);
        let m = crate::subspace::second_moment_of(&draws, 16).unwrap();
        let err = symmetric_norm(&m.sub(&g.sigma()).unwrap()).unwrap();
        assert!(err < 0.1, "{err}");
        assert!(draws.columns().all(|c| c[2] == 0.0 && c[3] == 0.0));
    }

    #[test]
    fn invalid_generators_rejected() {
        assert!(GaussianGenerator::axis_aligned(3, vec![1.0, 2.0]).is_err());
        assert!(GaussianGenerator::axis_aligned(3, vec![1.0, 0.0]).is_err());
        assert!(GaussianGenerator::axis_aligned(1, vec![1.0, 0.5]).is_err());
        assert!(PoolGenerator::new(ColumnBlock::zeros(3, 0)).is_err());
    }
}
