//! Deterministic random streams.
//!
//! Every independent unit of work (a Monte Carlo trial, a solver restart, one
//! run of a sweep) draws from its own ChaCha stream keyed by the master seed and
//! the unit's index path. Results therefore do not depend on scheduling or on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x5EED_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Generator for the work unit identified by `path` under `seed`.
pub fn stream_rng(seed: u64, path: &[u64]) -> StreamRng {
    let stream = stream_id(path);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child master seed for a sub-experiment, e.g. one Monte Carlo batch.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    splitmix64(seed ^ stream_id(path))
}
