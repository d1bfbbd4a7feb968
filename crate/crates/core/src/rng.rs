//! Deterministic, splittable random streams.
//!
//! A stream is identified by `(seed, stream_id)`. The seed keys a ChaCha8
//! block cipher and the stream id selects one of its 2^64 independent
//! counter sequences, so a stream's draws depend only on those two numbers.
//! Child streams are derived from task coordinates with [`RngStream::split`];
//! work scheduled on any number of threads sees the same draws.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Root stream for a seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for `child_index`. Pure: depends on the parent's identity
    /// only, never on how many draws the parent has made.
    pub fn split(&self, child_index: u64) -> RngStream {
        let id = mix64(mix64(self.stream_id ^ GOLDEN).wrapping_add(child_index.wrapping_mul(GOLDEN)));
        RngStream::new(self.seed, id)
    }

    /// Child stream addressed by several coordinates (e.g. grid cell, sample).
    pub fn split_path(&self, coords: &[u64]) -> RngStream {
        coords.iter().fold(self.clone(), |s, &c| s.split(c))
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`; `hi` itself can appear through rounding.
    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Bernoulli draw, `true` with probability `p`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniformly random permutation of `0..n` (Fisher–Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.inner.next_u64() % (i as u64 + 1)) as usize;
            idx.swap(i, j);
        }
        idx
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_draws() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_is_pure() {
        let mut parent = RngStream::from_seed(11);
        let before = parent.split(0);
        parent.next_u64();
        let after = parent.split(0);
        assert_eq!(before.stream_id(), after.stream_id());
        assert_eq!(before.seed(), after.seed());
    }

    #[test]
    fn split_children_differ_from_parent() {
        let parent = RngStream::from_seed(1);
        let ids: std::collections::HashSet<u64> =
            (0..1000).map(|i| parent.split(i).stream_id()).collect();
        assert_eq!(ids.len(), 1000);
        assert!(!ids.contains(&parent.stream_id()));
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut s = RngStream::from_seed(5);
        let mut p = s.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = RngStream::from_seed(2);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
