//! Deterministic child-seed derivation.
//!
//! Every random stream in the engine is keyed by a master seed plus a label
//! and a short index path, so results never depend on evaluation order or
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hashes `(master, label, parts)` into a new 64-bit seed.
pub fn child_seed(master: u64, label: &str, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    for part in parts {
        hasher.update(part.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, label: &str, parts: &[u64]) -> ChaCha8Rng {
    rng_from_seed(child_seed(master, label, parts))
}
