//! Stable 64-bit seed derivation.
//!
//! Every random draw in the toolkit is keyed by a seed derived from the run
//! seed and the identifiers of the work unit, so results do not depend on
//! scheduling order or worker count. The mixing function is fixed here and
//! must not change between releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Incremental builder for derived seeds.
#[derive(Clone, Copy, Debug)]
pub struct SeedHasher(u64);

impl SeedHasher {
    pub fn new(root: u64) -> Self {
        Self(mix64(root ^ GOLDEN))
    }

    pub fn u64(self, v: u64) -> Self {
        Self(mix64(self.0.wrapping_add(GOLDEN) ^ mix64(v)))
    }

    pub fn str(self, s: &str) -> Self {
        // FNV-1a over the bytes, with the length folded in so that
        // ("ab", "c") and ("a", "bc") differ.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in s.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.u64(h).u64(s.len() as u64)
    }

    pub fn finish(self) -> u64 {
        mix64(self.0)
    }
}

/// Uniform `[0, 1)` from the top 53 bits of a hash.
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-based uniform draw: the `index`-th value of the stream `seed`.
pub fn stream_unit(seed: u64, index: u64) -> f64 {
    unit_f64(SeedHasher::new(seed).u64(index).finish())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: changing them silently changes every experiment.
        let a = SeedHasher::new(0).str("img").str("diffusion").u64(3).finish();
        let b = SeedHasher::new(0).str("img").str("diffusion").u64(3).finish();
        assert_eq!(a, b);
        assert_eq!(mix64(0), 0);
        assert_eq!(mix64(1), 0x5692_161D_100B_05E5);
    }

    #[test]
    fn parts_are_not_concatenated() {
        let a = SeedHasher::new(1).str("ab").str("c").finish();
        let b = SeedHasher::new(1).str("a").str("bc").finish();
        assert_ne!(a, b);
        let c = SeedHasher::new(1).u64(1).u64(2).finish();
        let d = SeedHasher::new(1).u64(2).u64(1).finish();
        assert_ne!(c, d);
    }

    #[test]
    fn unit_range() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
        let mean: f64 = (0..10_000).map(|i| stream_unit(9, i)).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }
}
