use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::core_math::RngStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub private_size: usize,
    pub public_size: usize,
    pub seed: u64,
}

/// Draws `(private, public, rest)` index sets without replacement: private
/// first, public from the remainder.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if spec.private_size == 0 {
        return Err(Error::InfeasibleSplit("private set must be non-empty".into()));
    }
    if spec.private_size + spec.public_size > n {
        return Err(Error::InfeasibleSplit(format!(
            "private {} + public {} exceeds source size {n}",
            spec.private_size, spec.public_size
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut RngStream::new(spec.seed, "split").at(0));
    let rest = perm.split_off(spec.private_size + spec.public_size);
    let public = perm.split_off(spec.private_size);
    Ok((perm, public, rest))
}

/// Returns `(public, private)`.
pub fn split_public_private(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (private, public, _) = split_indices(ds.len(), spec)?;
    if public.is_empty() {
        return Err(Error::InfeasibleSplit("public set must be non-empty".into()));
    }
    Ok((ds.subset(&public)?, ds.subset(&private)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn capacity_check() {
        let s = SplitSpec {
            private_size: 10_000,
            public_size: 100,
            seed: 1,
        };
        assert!(matches!(split_indices(10_000, &s), Err(Error::InfeasibleSplit(_))));
    }

    #[test]
    fn mnist_sized_split() {
        let s = SplitSpec {
            private_size: 10_000,
            public_size: 100,
            seed: 42,
        };
        let (private, public, rest) = split_indices(60_000, &s).unwrap();
        assert_eq!((public.len(), private.len(), rest.len()), (100, 10_000, 49_900));
        let p: HashSet<_> = private.iter().collect();
        assert!(public.iter().all(|i| !p.contains(i)));
        assert_eq!(split_indices(60_000, &s).unwrap().1, public);
    }

    #[test]
    fn disjoint_for_every_small_split() {
        for n in 1..=12 {
            for private in 1..=n {
                for public in 0..=(n - private) {
                    let s = SplitSpec {
                        private_size: private,
                        public_size: public,
                        seed: (n * 31 + private) as u64,
                    };
                    let (a, b, c) = split_indices(n, &s).unwrap();
                    let all: HashSet<_> = a.iter().chain(&b).chain(&c).collect();
                    assert_eq!(all.len(), n);
                    assert_eq!((a.len(), b.len()), (private, public));
                }
            }
        }
    }
}
