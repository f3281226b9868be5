//! Deterministic seed derivation for per-column and per-box random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream addressed by `path` under `master`.
///
/// For a single-element path the map `index -> seed` is injective.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut s = mix(master);
    for (depth, &p) in path.iter().enumerate() {
        s =
            mix(s.wrapping_add(GOLDEN.wrapping_mul(p.wrapping_add(1)))
                ^ (depth as u64).rotate_left(32));
    }
    s
}

pub fn rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
