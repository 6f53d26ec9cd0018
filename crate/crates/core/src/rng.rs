//! Deterministic random streams.
//!
//! Every random decision in the crate (synthetic corpora, parameter
//! initialization, shuffling, dropout, randomization tests) draws from
//! SplitMix64: state advances by the golden-gamma constant
//! `0x9e3779b97f4a7c15` and each output is the Stafford "Mix13" finalizer of
//! the state. Integers, uniforms and normals are derived from the raw 64-bit
//! stream by the fixed rules below, so streams are identical on every
//! platform.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: SplitMix64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Stream keyed by a seed plus an ordered list of counters.
    pub fn keyed(seed: u64, key: &[u64]) -> Self {
        Self::new(derive_seed(seed, key))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Integer in `[0, n)` by 128-bit multiply-high. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Normal with the given standard deviation, redrawn until `|z| <= 2`.
    pub fn truncated_normal(&mut self, stddev: f64) -> f64 {
        loop {
            let z = self.standard_normal();
            if z.abs() <= 2.0 {
                return z * stddev;
            }
        }
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Mixes a seed with a key path into a new seed.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    let mut state = SplitMix64::seed_from_u64(seed).next_u64();
    for &k in key {
        state = SplitMix64::seed_from_u64(state ^ k.rotate_left(17)).next_u64();
    }
    state
}

/// 64-bit FNV-1a, used to turn tensor and site names into stream keys.
pub fn name_key(name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
