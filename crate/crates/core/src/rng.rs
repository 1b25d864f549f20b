//! Keyed random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream whose key is derived from
//! the user seed and a tuple of integers naming the step (study, sample size,
//! replicate, variable, resample index, ...). ChaCha is counter based, so
//! streams are independent of scheduling and of how many other streams exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags used to separate independent consumers of randomness.
pub mod tag {
    pub const DATA: u64 = 0x0da7a;
    pub const TUNE: u64 = 0x7e5e;
    pub const BOOTSTRAP: u64 = 0xb007;
    pub const ORACLE: u64 = 0x02ac1e;
    pub const CENSOR: u64 = 0xce5;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a generator keyed by `(seed, key...)`.
pub fn keyed(seed: u64, key: &[u64]) -> StreamRng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let mut acc = splitmix64(&mut state);
    for &k in key {
        state ^= k.wrapping_mul(0xff51_afd7_ed55_8ccd).rotate_left(17);
        acc ^= splitmix64(&mut state);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).wrapping_add(acc).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
