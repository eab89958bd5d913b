use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counter-indexed random stream.
///
/// The pair `(seed, stream_id)` selects a ChaCha20 key and the draw index
/// selects the ChaCha stream, so draw `i` can be produced in isolation by any
/// worker without replaying draws `0..i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: String,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl RngStream {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        Self {
            seed,
            stream_id: stream_id.into(),
        }
    }

    /// Derived stream, e.g. one per replicate.
    pub fn child(&self, label: impl std::fmt::Display) -> Self {
        Self::new(self.seed, format!("{}/{}", self.stream_id, label))
    }

    /// Generator positioned at the start of draw `index`.
    pub fn at(&self, index: u64) -> ChaCha20Rng {
        let mut state = self.seed ^ fnv1a(self.stream_id.as_bytes()).rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    pub fn next_u64_at(&self, index: u64) -> u64 {
        self.at(index).next_u64()
    }
}

pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `dim` i.i.d. draws from N(0, std²) taken from draw `index` of `rng`.
pub fn gaussian_vector(rng: &RngStream, index: u64, dim: usize, std: f64) -> Result<Vec<f64>> {
    if !std.is_finite() {
        return Err(Error::NonFinite(format!("gaussian std {std}")));
    }
    if std < 0.0 {
        return Err(Error::InvalidArgument(format!("negative std {std}")));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if std == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let mut r = rng.at(index);
    Ok((0..dim).map(|_| std * standard_normal(&mut r)).collect())
}
