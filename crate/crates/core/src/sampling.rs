//! Counter-based uniform sampling.
//!
//! Sample `i` of a stream seeded with `seed` is drawn from its own ChaCha
//! stream, so points can be generated in any order (or in parallel) and still
//! come out identical.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::problems::Domain;

/// Independent generator for sample `index` under `seed`.
pub fn point_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The `index`-th uniform sample from `domain`.
pub fn uniform_point(domain: &Domain, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = point_rng(seed, index);
    domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(&lo, &hi)| Uniform::new(lo, hi).sample(&mut rng))
        .collect()
}

/// `count` uniform samples from `domain`, in index order.
pub fn uniform_points(domain: &Domain, seed: u64, count: usize) -> Vec<Vec<f64>> {
    uniform_points_from(domain, seed, 0, count)
}

/// Samples `start..start + count` of the stream.
pub fn uniform_points_from(domain: &Domain, seed: u64, start: u64, count: usize) -> Vec<Vec<f64>> {
    (start..start + count as u64)
        .into_par_iter()
        .map(|i| uniform_point(domain, seed, i))
        .collect()
}
