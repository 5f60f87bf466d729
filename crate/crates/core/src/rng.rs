//! Seeded random streams.
//!
//! Every replication draws from its own ChaCha8 stream, keyed by the base
//! seed and a path of indices (replication id, sub-task id, ...). Results
//! therefore do not depend on the order in which replications execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `seed` and the index path `path`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let key = path
        .iter()
        .fold(splitmix64(seed), |acc, &i| splitmix64(acc ^ splitmix64(i.wrapping_add(1))));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(path.first().copied().unwrap_or(0));
    rng
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
