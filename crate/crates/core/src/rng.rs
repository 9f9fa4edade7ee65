//! Labeled seed derivation.
//!
//! Every random stream is keyed by `(master seed, label, index)` hashed with
//! SHA-256, so each stage and each work item draws from its own generator and
//! results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn digest(master: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// A 64-bit seed derived from `(master, label, index)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let d = digest(master, label, index);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Generator for the substream `(master, label, index)`.
pub fn stream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(master, label, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = stream(7, "noise", 3)
            .sample_iter(rand::distributions::Standard)
            .take(4)
            .collect();
        let b: Vec<u64> = stream(7, "noise", 3)
            .sample_iter(rand::distributions::Standard)
            .take(4)
            .collect();
        let c: Vec<u64> = stream(7, "noise", 4)
            .sample_iter(rand::distributions::Standard)
            .take(4)
            .collect();
        let d: Vec<u64> = stream(7, "place", 3)
            .sample_iter(rand::distributions::Standard)
            .take(4)
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(derive_seed(1, "x", 0), derive_seed(2, "x", 0));
    }

    #[test]
    fn label_boundaries_are_unambiguous() {
        assert_ne!(derive_seed(0, "ab", 0), derive_seed(0, "a", 0));
    }
}
