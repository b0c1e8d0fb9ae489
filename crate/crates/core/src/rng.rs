//! Seed splitting so every consumer gets an independent, reproducible stream
//! derived from one root seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of a named child stream.
pub fn child_seed(seed: u64, stream: &str) -> u64 {
    stream
        .bytes()
        .fold(splitmix(seed), |acc, b| splitmix(acc ^ b as u64))
}

/// Derives the seed of an indexed child stream.
pub fn indexed_seed(seed: u64, stream: &str, index: u64) -> u64 {
    splitmix(child_seed(seed, stream) ^ splitmix(index))
}

pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, name))
}

pub fn indexed_stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(indexed_seed(seed, name, index))
}
