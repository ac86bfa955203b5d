//! Seeded random streams.
//!
//! Every random draw in the crate comes from [`ChaCha8Rng`], a counter-based
//! generator with 2^64 independent streams per seed. `substream(seed, i)` selects
//! stream `i`, so work indexed by `i` can run in any order (or in parallel) and
//! still see the same numbers. `derive_seed` mixes a parent seed with a tag to get
//! an unrelated child seed for a nested computation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for sub-computation `tag` of the computation seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(mix64(seed) ^ tag.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Child seed keyed by a sequence of tags; order matters.
pub fn derive_seed_path(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |s, &t| derive_seed(s, t))
}
