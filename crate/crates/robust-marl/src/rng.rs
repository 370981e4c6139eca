//! Deterministic RNG stream derivation.
//!
//! Every random stream in the crate is a ChaCha12 generator whose seed is
//! derived from a master seed plus a list of integer tags (channel id, agent
//! index, episode number, ...). Distinct tag paths give statistically
//! independent streams, so consuming one stream never shifts another. That is
//! what makes ablations comparable: turning a noise channel on cannot change
//! the draws seen by any other channel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche behavior for seed mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a ChaCha12 stream from a master seed and a tag path.
pub fn derive_rng(master: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = mix(master);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    let mut seed = [0u8; 32];
    for chunk in 0..4 {
        state = mix(state);
        seed[chunk * 8..(chunk + 1) * 8].copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
