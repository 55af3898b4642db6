//! Labeled deterministic RNG streams.
//!
//! Every seeded operation in the crate derives its own stream from a root
//! seed plus a textual label (and optionally an index), so that adding or
//! reordering consumers never perturbs the draws of another stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a ChaCha8 RNG from `(seed, label, index)`.
///
/// The same triple always yields the same stream, across processes and
/// platforms.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(label.as_bytes());
    hasher.update([0x1f]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}
