//! Seeded PCG streams. Each consumer draws from its own stream so that, for
//! example, changing the batch size never perturbs weight initialization.

use rand_pcg::Pcg64;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_DATA: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;

pub fn pcg(seed: u64, stream: u64) -> Pcg64 {
    Pcg64::new(u128::from(seed), u128::from(stream))
}

/// Shuffle seed of one training epoch.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
