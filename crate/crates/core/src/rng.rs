//! Deterministic random-number substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit seed plus a stream id, so results do not depend on evaluation
//! order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream index reserved for per-run (not per-spectrum) draws.
pub const RUN_STREAM: u64 = 0xFFFF_FFFF;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a tag into an independent-looking child seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0x5DEE_CE66_D1CE_5EED)))
}

/// Generator for spectrum `index` of run `run`.
pub fn substream(seed: u64, run: u32, index: u32) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((run as u64) << 32) | index as u64);
    r
}
