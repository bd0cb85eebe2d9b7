//! Data-parallel helpers.
//!
//! Sweep points, random verification systems and lemma trials are all
//! independent, so they map cleanly onto rayon. Building without the
//! `parallel` feature swaps in plain sequential iteration with identical
//! results; determinism comes from giving every index its own counter-derived
//! RNG stream, never from execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept for baseline comparisons in the benches.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Deterministic per-index RNG: the same `(seed, index)` pair yields the same
/// stream no matter how work is scheduled.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    // splitmix64-style index mixing keeps neighbouring streams uncorrelated
    let mut z = index.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(seed ^ z)
}
