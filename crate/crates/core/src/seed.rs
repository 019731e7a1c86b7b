//! Seed derivation. Every random decision draws from a generator keyed by
//! `(master seed, stream tag, index)`, which makes results independent of
//! evaluation order and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x5EED_C0DE;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags keep independent decisions from sharing random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Selection = 1,
    Partner = 2,
    Order = 3,
    Cutout = 4,
    Variants = 5,
    Generator = 6,
    Training = 7,
    Lambda = 8,
}

pub fn derive(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream as u64)) ^ index)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: Stream, index: u64) -> Rng {
    rng(derive(master, stream, index))
}
