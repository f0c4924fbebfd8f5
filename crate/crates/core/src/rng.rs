//! Seeded random streams.
//!
//! Every stochastic step draws from its own ChaCha8 stream derived from the
//! user seed and a tuple of integer keys, so results do not depend on how
//! work is scheduled across threads.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream key: background rows for break-down and Shapley.
pub const BACKGROUND: u64 = 1;
/// Stream key: variable orderings for Shapley sampling, keyed further by ordering index.
pub const ORDERINGS: u64 = 2;
/// Stream key: row sample for permutation importance.
pub const IMPORTANCE_SAMPLE: u64 = 3;
/// Stream key: column permutations, keyed further by (variable index, repetition).
pub const IMPORTANCE_PERMUTATION: u64 = 4;
/// Stream key: row sample for aggregated profiles.
pub const PROFILE_SAMPLE: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, keys...)`.
pub fn substream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// `min(k, n)` distinct row indices in ascending order.
///
/// When `k >= n` every row is returned and no randomness is consumed.
pub fn sample_rows(seed: u64, stream: u64, n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = substream(seed, &[stream]);
    let mut rows = index::sample(&mut rng, n, k).into_vec();
    rows.sort_unstable();
    rows
}
