//! Seed derivation: one 64-bit master seed fans out into independent sub-streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sub-stream tags. Each consumer of randomness owns one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Problem = 1,
    Batches = 2,
    InitialPoint = 3,
    Split = 4,
}

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: Stream) -> u64 {
    mix(master ^ mix(stream as u64))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator positioned on ChaCha stream `stream` of `seed`.
pub fn rng_on_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
