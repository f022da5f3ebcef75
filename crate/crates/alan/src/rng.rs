//! Named deterministic RNG streams.
//!
//! Every stochastic subsystem (data generation, batch order, dropout, clip
//! sampling, phrase masking, initialization) pulls from its own stream derived
//! from `(seed, tag)`, so adding draws to one subsystem never perturbs
//! another and runs reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in tag.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// RNG for the stream named `tag` under a run seed.
pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    indexed_stream(seed, tag, 0)
}

/// Per-item variant: `(seed, tag, index)` streams are mutually independent.
pub fn indexed_stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ fnv1a(tag) ^ index.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
