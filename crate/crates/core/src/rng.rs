//! Portable, seedable random streams.
//!
//! Every random draw in the crate goes through [`StreamRng`]: xoshiro256++
//! seeded through SplitMix64. Independent substreams are derived from
//! `(seed, stream id)` pairs so parallel work is order-independent.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Name recorded in manifests so cohorts can be regenerated elsewhere.
pub const RNG_ALGORITHM: &str = "xoshiro256++ (seeded by splitmix64)";

pub type StreamRng = Xoshiro256PlusPlus;

/// One SplitMix64 output step applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root stream for a seed.
pub fn seeded(seed: u64) -> StreamRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Substream `id` of `seed`. Distinct ids give statistically independent
/// streams; the mapping is fixed so results are reproducible.
pub fn substream(seed: u64, id: u64) -> StreamRng {
    Xoshiro256PlusPlus::seed_from_u64(splitmix64(seed) ^ splitmix64(id.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Substream addressed by a (domain, index) pair, e.g. ("bootstrap", r).
pub fn named_substream(seed: u64, domain: &str, index: u64) -> StreamRng {
    let tag = domain
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3));
    substream(seed ^ splitmix64(tag), index)
}
