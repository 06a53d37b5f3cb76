//! Seed derivation. Every stochastic component draws from a ChaCha stream
//! whose seed is `hash64(master ∥ role ∥ index)`, so a master seed fixes the
//! whole experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// First 8 bytes (little endian) of SHA-256 over the given bytes.
pub fn hash64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `hash64(master_seed ∥ role ∥ index)` with integers in little endian.
pub fn derive(master: u64, role: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(16 + role.len());
    buf.extend_from_slice(&master.to_le_bytes());
    buf.extend_from_slice(role.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    hash64(&buf)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, role: &str, index: u64) -> Rng {
    rng(derive(master, role, index))
}

/// Hex SHA-256 of arbitrary bytes, used for fingerprints and cache keys.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
