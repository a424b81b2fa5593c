//! Seeded sampling without replacement.
//!
//! The cloud is sampled uniformly; mesh-refined regions are already denser
//! in an exported point cloud, so the subset inherits that density.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// Independent deterministic stream `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` distinct indices below `len`, in sampled order.
pub fn sample_indices(len: usize, n: usize, mut rng: ChaCha8Rng) -> Result<Vec<usize>, DataError> {
    if n > len {
        return Err(DataError::SampleTooLarge {
            requested: n,
            available: len,
        });
    }
    Ok(rand::seq::index::sample(&mut rng, len, n).into_vec())
}

/// Uniform random subset of `n` points, fully determined by `(cloud, n, seed)`.
pub fn sample_points<T: Clone>(cloud: &[T], n: usize, seed: u64) -> Result<Vec<T>, DataError> {
    let idx = sample_indices(cloud.len(), n, stream_rng(seed, 0))?;
    Ok(idx.into_iter().map(|i| cloud[i].clone()).collect())
}
