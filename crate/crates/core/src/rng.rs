//! Seeded randomness.
//!
//! All random draws go through SplitMix64 (Steele, Lea and Flood), whose
//! state update and output mix are fixed by three 64-bit constants:
//!
//! ```text
//! state  = state + 0x9E3779B97F4A7C15
//! z      = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
//! z      = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output = z ^ (z >> 31)
//! ```
//!
//! The draw helpers below only use the raw 64-bit outputs and exact integer or
//! IEEE operations, so any implementation of the generator reproduces every
//! stream bit for bit:
//!
//! * uniform in [0, 1): `(output >> 11) · 2⁻⁵³`
//! * Bernoulli(p): `uniform < p`
//! * geometric(p) on {0, 1, …}: number of failed Bernoulli(p) trials before
//!   the first success, stopped early at the cap if one is given
//! * child stream: a fresh generator seeded with the parent's next output
//!   xor the stream label

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Stream labels used to split a scenario seed into independent streams.
pub mod stream {
    pub const LOSSES: u64 = 0x4C4F_5353;
    pub const DELAYS: u64 = 0x444C_4159;
    pub const ACTIVATION: u64 = 0x4143_5456;
    pub const ORDERS: u64 = 0x4F52_4452;
}

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: SplitMix64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { inner: SplitMix64::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Independent child stream identified by `label`.
    pub fn split(&mut self, label: u64) -> SimRng {
        SimRng::new(self.next_u64() ^ label)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` by rejection on the top bits.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Failures before the first success; `None` for the cap means unbounded.
    pub fn geometric(&mut self, p: f64, cap: Option<u64>) -> u64 {
        let mut k = 0;
        loop {
            if cap.is_some_and(|c| k >= c) || self.bernoulli(p) {
                return k;
            }
            k += 1;
        }
    }

    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Vector with entries uniform in `[-1, 1)`, rescaled into the ℓ2 ball of radius `r`.
    pub fn in_ball(&mut self, dim: usize, r: f64) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| self.range(-1.0, 1.0)).collect();
        let n = crate::geometry::norm2(&v);
        let s = if n > 1.0 { r / n } else { r };
        v.into_iter().map(|x| x * s).collect()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
