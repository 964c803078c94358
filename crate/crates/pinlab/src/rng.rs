//! Deterministic stream derivation.
//!
//! Every concurrent unit of work (disorder replica, Monte Carlo draw) owns a
//! ChaCha8 stream whose key is derived from (master seed, tag path) by
//! splitmix64 mixing. Results are therefore reproducible bit for bit and
//! independent of thread scheduling, and a stream read further with the same
//! seed keeps its prefix.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses (master, tags) into a single well-mixed u64.
pub fn mix_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master ^ 0xd1b5_4a32_d192_ed03;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state = acc ^ t.wrapping_mul(GOLDEN);
        acc = splitmix64(&mut state);
    }
    acc
}

/// ChaCha8 stream for the given tag path under a master seed.
pub fn stream_rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = mix_seed(master, tags);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Disorder seed for one replica: hash of (master seed, replica index).
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    mix_seed(master, &[replica])
}
