//! Seeded permutations used wherever the pipeline samples.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fisher-Yates permutation of `0..n` driven by ChaCha8 seeded with `seed`.
///
/// For `i` from `n-1` down to 1, swap position `i` with `next_u64() % (i+1)`.
/// The exact draw sequence is part of the contract: splits and samples are
/// reproducible from the seed alone.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Mix a per-purpose salt into a user seed so independent draws don't share
/// a stream.
pub(crate) fn derive_seed(seed: u64, salt: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(salt.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
