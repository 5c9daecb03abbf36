//! Deterministic stream derivation.
//!
//! Every random quantity in the crate flows from a single master seed.
//! Independent consumers (replications, bootstrap draws, Gaussian-process
//! draws) get their own ChaCha stream keyed by a mixed tag sequence, so
//! results do not depend on scheduling or thread count.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// SplitMix64 finalizer; full-period mixing of a 64-bit state.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a tag path.
///
/// Different tag paths yield statistically independent streams; the same
/// path always yields the same seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0xff51_afd7_ed55_8ccd);
        out ^= splitmix64(&mut state);
    }
    out
}

/// A ChaCha stream for the given tag path under `master`.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, tags))
}

/// Tag namespaces for the crate's random consumers.
pub mod tags {
    pub const DGP: u64 = 0x01;
    pub const BOOTSTRAP: u64 = 0x02;
    pub const GP_CRITVALS: u64 = 0x03;
    pub const REPLICATION: u64 = 0x04;
}
