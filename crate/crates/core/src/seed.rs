//! Seed derivation.
//!
//! Every randomized component draws from its own ChaCha stream whose seed is
//! the run seed mixed with a stable component path, e.g.
//! `("metrics", image_id, model_id, "sauc")`. Streams never depend on
//! scheduling order, so parallel and sequential runs agree bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Mixes `run_seed` with a component path into a 64-bit seed.
pub fn derive_seed(run_seed: u64, path: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    for part in path {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(run_seed: u64, path: &[&str]) -> Rng {
    rng_from_seed(derive_seed(run_seed, path))
}

/// Hex SHA-256 of arbitrary bytes, truncated to 16 characters.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
