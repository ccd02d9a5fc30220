//! Counter-based random substreams.
//!
//! Every unit of Monte Carlo work (an ensemble chunk, a channel draw at a
//! given SNR) gets its own ChaCha stream addressed by a `(key, index)` pair,
//! so results never depend on which thread ran which unit or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for unrelated purposes disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Link = 0x4c49_4e4b,
    Ensemble = 0x454e_534d,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-key from a root seed, a domain and a 64-bit label (for
/// example the bit pattern of an SNR value).
pub fn derive_key(seed: u64, domain: Domain, label: u64) -> u64 {
    mix(mix(seed ^ mix(domain as u64)).wrapping_add(label))
}

/// The `index`-th stream under `key`.
pub fn substream(key: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
