//! Execution strategy for data-parallel inner loops.
//!
//! Every parallel map writes into fixed output slots and every reduction is
//! done afterwards in index order, so `Sequential` and `Parallel` give
//! bit-identical results.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    /// Uses rayon when built with the `parallel` feature, otherwise falls back
    /// to sequential execution.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Fills consecutive `chunk`-sized slices of `out`; `f` receives the chunk index.
    pub fn for_each_chunk<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(chunk > 0);
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(i, c)| f(i, c));
            }
            _ => out
                .chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |i: usize| ((i as f64) * 0.37).sin();
        assert_eq!(Exec::Sequential.map(1000, f), Exec::Parallel.map(1000, f));

        let mut a = vec![0.0; 97];
        let mut b = vec![0.0; 97];
        let g = |ci: usize, c: &mut [f64]| {
            for (j, x) in c.iter_mut().enumerate() {
                *x = (ci * 10 + j) as f64;
            }
        };
        Exec::Sequential.for_each_chunk(&mut a, 10, g);
        Exec::Parallel.for_each_chunk(&mut b, 10, g);
        assert_eq!(a, b);
    }
}
