//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! the run seed and a fixed tag, so adding draws in one place never shifts
//! the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const TAG_INIT: u64 = 1;
pub const TAG_SHUFFLE: u64 = 2;
pub const TAG_AUGMENT: u64 = 3;
pub const TAG_MIX: u64 = 4;
pub const TAG_SPLIT: u64 = 5;
pub const TAG_PAIRS: u64 = 6;
pub const TAG_OCCLUDE: u64 = 7;
pub const TAG_SYNTH: u64 = 8;

pub fn stream(seed: u64, tag: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// A stream keyed by `(seed, tag, index)`; used for per-epoch and per-item
/// streams.
pub fn substream(seed: u64, tag: u64, index: u64) -> Rng {
    let mixed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    stream(mixed, tag)
}
