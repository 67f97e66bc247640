//! Deterministic seed derivation.
//!
//! Every random decision in the crate draws from a ChaCha8 stream seeded by
//! folding a base seed with the integers that identify the decision site
//! (branch index, epoch, batch, row, view, ...). Changing any component
//! changes the stream; repeating the components reproduces it exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby seeds.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold `parts` into `base` one at a time.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &p in parts {
        state = splitmix(state ^ splitmix(p));
    }
    state
}

/// ChaCha8 stream for a derived seed.
pub fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
