//! Named, purpose-tagged random streams.
//!
//! Every stochastic step draws from its own ChaCha stream whose key is a
//! SHA-256 digest of `(seed, tag, index)`. Streams never share state, so
//! adding a consumer never shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub const INSTANCE: &str = "instance";
pub const FM_INIT: &str = "fm-init";
pub const SA: &str = "sa";
pub const D0: &str = "d0";
pub const SUBSAMPLE: &str = "subsample";
pub const ENSEMBLE: &str = "ensemble";
pub const RS: &str = "rs";

/// Hash an ordered list of components into a 64-bit seed.
pub fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stream_seed(seed: u64, tag: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    hasher.finalize().into()
}

pub fn stream(seed: u64, tag: &str, index: u64) -> StreamRng {
    ChaCha8Rng::from_seed(stream_seed(seed, tag, index))
}
