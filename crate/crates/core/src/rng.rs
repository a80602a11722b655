//! Seeded random streams.
//!
//! Uniforms come from ChaCha8. Normal deviates use the Marsaglia polar
//! method: draw `u, v` uniform on `(-1, 1)` until `s = u^2 + v^2` lies in
//! `(0, 1)`, then return `u * sqrt(-2 ln s / s)` and cache the twin
//! `v * sqrt(-2 ln s / s)` for the next call.
//!
//! Per-trial streams are derived with SplitMix64 over `seed ^ mix(index)`, so
//! a trial's draws depend only on `(seed, index)`.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `index` under master `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed), spare_normal: None }
    }

    /// Independent stream for trial `index`.
    pub fn for_trial(seed: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, index))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer on `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.inner.gen_range(lo..=hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    /// Uniform point on the unit circle, as `(cos, sin)`.
    pub fn unit_circle(&mut self) -> (f64, f64) {
        let theta = std::f64::consts::TAU * self.uniform();
        (theta.cos(), theta.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
            assert_eq!(a.int_inclusive(3, 15), b.int_inclusive(3, 15));
        }
        assert_ne!(Rng::for_trial(1, 0).uniform(), Rng::for_trial(1, 1).uniform());
    }

    #[test]
    fn normal_moments() {
        let mut r = Rng::new(7);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.standard_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        // 5 sigma bands for the sample mean and variance
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn integers_cover_range() {
        let mut r = Rng::new(3);
        let mut seen = [false; 13];
        for _ in 0..2000 {
            let v = r.int_inclusive(3, 15);
            assert!((3..=15).contains(&v));
            seen[(v - 3) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
