//! Seeded random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 stream identified by
//! `(seed, stream)`. Streams are decorrelated through a SplitMix64 mix so that
//! neighbouring stream ids do not produce related sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids so different stages never share a sequence.
pub mod streams {
    pub const PRIOR_FIELDS: u64 = 0x1000;
    pub const PRIOR_SCALARS: u64 = 0x2000;
    pub const OBS_NOISE: u64 = 0x3000;
    pub const VAE_INIT: u64 = 0x4000;
    pub const VAE_SHUFFLE: u64 = 0x4100;
    pub const VAE_NOISE: u64 = 0x4200;
    pub const ESMDA: u64 = 0x5000;
    pub const KMEANS: u64 = 0x6000;
    pub const GENERATE: u64 = 0x7000;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic RNG for a global seed and a stream id.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)))
}

/// Stream id for item `index` within a stage `tag`.
pub fn substream(tag: u64, index: u64) -> u64 {
    (tag << 32) ^ index
}
