//! Seeded random number generation.
//!
//! The stream is ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed by the 64-bit seed
//! through `SeedableRng::seed_from_u64`. ChaCha is specified over 32-bit word
//! arithmetic only, so an identical seed yields an identical stream on every
//! platform. All conversions to floating point live here and use a single
//! fixed rule: the top 53 bits of a `u64` scaled by 2⁻⁵³.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::matrix::Matrix;

const INV_2_POW_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_POW_53
    }

    /// Uniform in `[-0.5, 0.5)`, the pixel distribution of the image tasks.
    #[inline]
    pub fn centered(&mut self) -> f64 {
        self.unit() - 0.5
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `[0, n)` by rejection (no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Standard normal via Box-Muller (one draw per call, the second is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.uniform(lo, hi))
    }

    /// Matrix with entries uniform in `[-scale, scale)`.
    pub fn symmetric_uniform_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
        self.uniform_matrix(rows, cols, -scale, scale)
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn stream_is_pinned() {
        // Frozen first outputs; a change here breaks dataset reproducibility.
        let mut r = SeededRng::new(0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        assert_eq!(
            first,
            [13080132717333068652, 8594738769458413623, 12896916468484187878]
        );
    }

    #[test]
    fn centered_range_and_mean() {
        let mut r = SeededRng::new(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = r.centered();
            assert!((-0.5..0.5).contains(&x));
            sum += x;
        }
        assert!((sum / n as f64).abs() < 5e-3);
    }

    #[test]
    fn below_is_in_range() {
        let mut r = SeededRng::new(11);
        for n in [1u64, 2, 7, 1000] {
            for _ in 0..200 {
                assert!(r.below(n) < n);
            }
        }
    }
}
