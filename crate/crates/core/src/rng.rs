//! Seeded, reproducible randomness.
//!
//! [`CsRng`] is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), whose output
//! stream is fixed for a given 64-bit seed on every platform. Child streams
//! are derived with a SplitMix64 finalizer so that sibling streams do not
//! overlap. Handles are not meant to be shared across threads: fork one per
//! worker instead.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct CsRng {
    inner: ChaCha8Rng,
}

/// SplitMix64 mix of `seed` and `stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CsRng {
    pub fn seed_from(seed: u64) -> Self {
        CsRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` of the generator family `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        CsRng::seed_from(derive_seed(seed, stream))
    }

    /// Child generator; advances `self` by one draw.
    pub fn fork(&mut self) -> CsRng {
        let s = self.inner.next_u64();
        CsRng::seed_from(derive_seed(s, 0))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi]`; returns `lo` when the interval is degenerate.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        self.inner.gen_range(lo..=hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `amount` distinct indices from `0..len`, in sampling order.
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, len, amount).into_vec()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = CsRng::seed_from(7);
        let mut b = CsRng::seed_from(7);
        for _ in 0..100 {
            assert_eq!(a.unit().to_bits(), b.unit().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = CsRng::stream(7, 0);
        let mut b = CsRng::stream(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
    }

    #[test]
    fn fork_is_deterministic() {
        let mut a = CsRng::seed_from(3);
        let mut b = CsRng::seed_from(3);
        assert_eq!(a.fork().next_u64(), b.fork().next_u64());
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_bounds() {
        let mut r = CsRng::seed_from(1);
        for _ in 0..1000 {
            let v = r.uniform(-2.0, 3.0);
            assert!((-2.0..=3.0).contains(&v));
        }
        assert_eq!(r.uniform(1.0, 1.0), 1.0);
    }

    #[test]
    fn sample_indices_are_distinct() {
        let mut r = CsRng::seed_from(9);
        let mut idx = r.sample_indices(50, 20);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 20);
        assert!(idx.iter().all(|&i| i < 50));
    }
}
