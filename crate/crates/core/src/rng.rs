//! Deterministic RNG streams.
//!
//! Every source of randomness in a run is a named ChaCha12 stream derived
//! from the run seed, so adding or removing one consumer (e.g. skipping
//! generator training when the regularizer is off) cannot shift any other
//! stream. This is what makes the bit-identical reduction and determinism
//! contracts hold.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seeded RNG for one named stream of a run.
pub fn derive_rng(seed: u64, stream: &str) -> ChaCha12Rng {
    let h1 = fnv1a(stream.as_bytes(), 0xcbf29ce484222325);
    let h2 = fnv1a(stream.as_bytes(), h1 ^ 0x9e3779b97f4a7c15);
    let h3 = fnv1a(&seed.to_le_bytes(), h2);
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h1.to_le_bytes());
    key[16..24].copy_from_slice(&h2.to_le_bytes());
    key[24..32].copy_from_slice(&h3.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}
