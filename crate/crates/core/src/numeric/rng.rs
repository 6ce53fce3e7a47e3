//! Counter-based random number streams.
//!
//! Every randomized operation in the crate draws from a ChaCha8 stream
//! addressed by `(seed, domain, index)`: the user seed keys the cipher and the
//! 64-bit stream id is `(domain << 48) | index`. Streams are independent, so
//! replications and splits can run in parallel in any order and still
//! reproduce bit-identically; there is no shared mutable generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Namespaces for derived streams. The numeric values are part of the
/// reproducibility contract; do not reorder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngDomain {
    FoldSplit = 1,
    Undersample = 2,
    Simulate = 3,
    Replication = 4,
    SplitCycle = 5,
    BalanceDraw = 6,
}

/// RNG for `(seed, domain, index)`. `index` must fit in 48 bits, which covers
/// every counter used here (replications, folds, draws).
pub fn stream_rng(seed: u64, domain: RngDomain, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << 48), "stream index exceeds 48 bits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | index);
    rng
}

/// Derive a child seed, for operations that take a bare seed of their own
/// (e.g. one estimate cycle inside a replication). SplitMix64 finalizer.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash of a string, for keying per-cluster streams by
/// id so the draw a cluster receives does not depend on collection order.
/// Fixed algorithm on purpose: std's hasher is not stable across releases.
pub fn hash_id(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
