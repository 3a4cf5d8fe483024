//! Seeding scheme.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded through
//! [`seeded`]. ChaCha8 output is specified independently of platform and word
//! size, so a recorded seed reproduces the same instance everywhere.
//!
//! Per-item seeds are derived from a run seed with [`derive_seed`]:
//! `splitmix64(splitmix64(seed ^ stream) ^ index)`. The stream separates
//! independent sequences (for example one per dataset cell), and the index
//! addresses an item within the stream, so growing a dataset never changes the
//! seeds of items that already exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PuzzleRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> PuzzleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream) ^ index)
}

/// FNV-1a over a label, used to turn a stream name into a stream id.
pub fn stream_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
