//! Named, seed-derived random substreams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` whose seed is
//! derived from a master seed, a stream name (`"train"`, `"adversary"`,
//! `"mc"`, `"split"`, ...) and an index. Components can be re-run in
//! isolation by recreating the same substream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derive the 64-bit seed of substream `(name, index)` under `master`.
pub fn derive_seed(master: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(name)).wrapping_add(splitmix64(index)))
}

pub fn substream(master: u64, name: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, name, index))
}
