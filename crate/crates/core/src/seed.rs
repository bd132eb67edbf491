//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a parent
//! seed plus a (stream, index) pair, so parallel work units never share or
//! depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a parent seed with a named stream and an index into a child seed.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags, kept distinct so sibling derivations never collide.
pub(crate) const STREAM_TREE: u64 = 0x7472_6565;
pub(crate) const STREAM_OUTER: u64 = 0x6f75_7465;
pub(crate) const STREAM_INNER: u64 = 0x696e_6e65;
pub(crate) const STREAM_FIT: u64 = 0x6669_7420;
pub(crate) const STREAM_REP: u64 = 0x7265_7020;
pub(crate) const STREAM_CENSOR: u64 = 0x6365_6e73;
pub(crate) const STREAM_VALID: u64 = 0x7661_6c69;
