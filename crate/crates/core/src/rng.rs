//! Seed derivation shared by every randomized component.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose seed
//! is derived from an explicit master seed and a tuple of stream keys, so
//! results never depend on execution order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with stream keys into a new 64-bit seed.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0xD6E8_FEB8_6659_FD93)));
    }
    h
}

/// Generator for the stream identified by `(master, keys)`.
pub fn stream(master: u64, keys: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, keys))
}
