//! Named random substreams derived from one user-visible seed.
//!
//! Every consumer of randomness gets its own ChaCha stream selected by a
//! `(purpose, index)` pair, so the draws for tree 17 do not depend on how
//! many trees were fitted before it or on which thread fits it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Split = 1,
    Tree = 2,
    Generator = 3,
    Repetition = 4,
    Shift = 5,
}

/// Deterministic stream for `(seed, purpose, index)`.
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << 56));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | index);
    rng
}

/// Derive a child seed, used for per-repetition seeds in Monte-Carlo runs.
pub fn child_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    substream(seed, purpose, index).next_u64()
}

/// Uniform index in `0..n`. Goes through `u64` so results do not depend on
/// the platform's pointer width.
pub fn index_below<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    rng.random_range(0..n as u64) as usize
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}

/// `k` distinct values from `0..n`, returned in ascending order.
pub fn choose_distinct<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + index_below(rng, n - i);
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}
