//! Seeded random substreams.
//!
//! All randomness comes from ChaCha8 generators. A run seed is never used
//! directly: each consumer derives its own substream by hashing the seed
//! together with a stream label,
//!
//! ```text
//! key = SHA-256("feedalign-rng-v1" || seed as u64 little-endian || label)
//! ```
//!
//! and seeding `ChaCha8Rng` with the 32-byte digest. Weight initialization
//! therefore does not share a stream with feedback matrices or batch
//! shuffling, so networks trained with different algorithms from the same seed
//! start from identical weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream labels used across the crate.
pub mod streams {
    pub const WEIGHTS: &str = "weights";
    pub const FEEDBACK: &str = "feedback";
    pub const SHUFFLE: &str = "shuffle";
    pub const SYNTHETIC_MEANS: &str = "synthetic-means";
    pub const SYNTHETIC_SAMPLES: &str = "synthetic-samples";
}

pub type StreamRng = ChaCha8Rng;

pub fn substream(seed: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(b"feedalign-rng-v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
