//! Seed and stream management.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] built from a
//! master seed plus a stream key. Parallel work is split into fixed batches,
//! each with its own key, so results never depend on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Samples per Monte Carlo batch. Fixed so batching is a function of the
/// sample count only.
pub const BATCH_SIZE: usize = 8192;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Generator for the stream identified by `key` under `seed`.
pub fn stream(seed: u64, key: &[u64]) -> SimRng {
    let id = key
        .iter()
        .fold(0x5EED_0F_A1F1_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Splits `n` samples into `(batch_index, start, len)` chunks of [`BATCH_SIZE`].
pub fn batches(n: usize) -> impl Iterator<Item = (u64, usize, usize)> {
    (0..n.div_ceil(BATCH_SIZE)).map(move |b| {
        let start = b * BATCH_SIZE;
        (b as u64, start, BATCH_SIZE.min(n - start))
    })
}
