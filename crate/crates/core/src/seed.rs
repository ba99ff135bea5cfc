//! Named sub-seeds derived from a single user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a stable 64-bit seed for the component called `name`.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn named_rng(seed: u64, name: &str) -> ChaCha8Rng {
    rng(sub_seed(seed, name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ_by_name_and_are_stable() {
        assert_eq!(sub_seed(7, "kmeans"), sub_seed(7, "kmeans"));
        assert_ne!(sub_seed(7, "kmeans"), sub_seed(7, "gmm"));
        assert_ne!(sub_seed(7, "kmeans"), sub_seed(8, "kmeans"));
    }
}
