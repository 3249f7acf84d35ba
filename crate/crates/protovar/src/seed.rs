//! Deterministic task-seed derivation.
//!
//! Every randomized task (partition shuffle, bootstrap resample, synthetic
//! subject) gets its own RNG seeded from a hash of (master seed, label,
//! index). Seeds are therefore independent of scheduling and thread count,
//! and the derivation is bit-exact across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// First 8 bytes (big-endian) of SHA-256 over
/// `master (8-byte BE) || label (UTF-8) || index (8-byte BE)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_be_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_be_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

/// Stream RNG for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_vectors() {
        // Frozen against an independent SHA-256 implementation.
        assert_eq!(derive_seed(0, "partition", 0), 10394657933624314128);
        assert_eq!(derive_seed(7, "partition", 2), 17188931002512264014);
        assert_eq!(derive_seed(42, "boot", 999), 5511354306927072057);
    }

    #[test]
    fn distinct_labels_and_indices_give_distinct_seeds() {
        let a = derive_seed(1, "partition", 0);
        let b = derive_seed(1, "partition", 1);
        let c = derive_seed(1, "boot", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }

    #[test]
    fn rng_streams_are_reproducible() {
        use rand::Rng;
        let mut r1 = rng_from(derive_seed(9, "x", 3));
        let mut r2 = rng_from(derive_seed(9, "x", 3));
        for _ in 0..16 {
            assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        }
    }
}
