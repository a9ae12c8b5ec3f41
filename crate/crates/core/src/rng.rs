//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng`). Independent streams are derived from one
//! 64-bit experiment seed and a stream index with the SplitMix64 finaliser,
//! so a run's output depends only on `(seed, stream)` and not on thread
//! scheduling or the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Generator for the given seed.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` of experiment seed `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}
