//! Seeded random number generation.
//!
//! Every random quantity in the crate is drawn from a [`SeededRng`] built from
//! a `u64` seed and a purpose-specific stream id, so that (for example) a
//! dataset and a student initialization drawn from the same seed value are
//! still independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream ids separating the independent uses of a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sphere = 0,
    Teacher = 1,
    Data = 2,
    Init = 3,
    Probes = 4,
    Holdout = 5,
}

pub fn seeded_rng(seed: u64, stream: Stream) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
