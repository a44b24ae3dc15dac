//! Deterministic seed derivation.
//!
//! Every random consumer gets its own ChaCha8 stream, seeded from
//! `mix(master ^ mix(tag))` where `mix` is the SplitMix64 finalizer. Trial
//! seeds in the harness are `derive(derive(master, CELL_BASE + cell), trial)`.
//! Streams are therefore independent of evaluation order and worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for the ground-truth signal.
pub const TAG_SIGNAL: u64 = 0x5349_474e;
/// Stream tag for the measurement matrices.
pub const TAG_MATRICES: u64 = 0x4d41_5452;
/// Stream tag for observation noise.
pub const TAG_NOISE: u64 = 0x4e4f_4953;
/// Stream tag for frame-bound sphere sampling.
pub const TAG_FRAME: u64 = 0x4652_414d;
/// Stream tag for solver initial points.
pub const TAG_INIT: u64 = 0x494e_4954;
/// Stream tag for the power-iteration start vector.
pub const TAG_SPECTRAL: u64 = 0x5350_4543;
/// Offset added to a cell index before mixing it into the master seed.
pub const CELL_BASE: u64 = 0x4345_4c4c_0000_0000;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, tag: u64) -> u64 {
    mix(master ^ mix(tag))
}

pub fn trial_seed(master: u64, cell: usize, trial: usize) -> u64 {
    derive(derive(master, CELL_BASE.wrapping_add(cell as u64)), trial as u64)
}

pub fn stream(master: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tag))
}
