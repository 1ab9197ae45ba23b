use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Seedable, platform-independent random stream.
///
/// Each logical actor (client, server, data generator) owns one; child streams
/// are derived with [`Rng::fork`] so that adding an actor never perturbs the
/// draws of another.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream keyed by `(seed, tag)`.
    pub fn derive(seed: u64, tag: u64) -> Self {
        Self::seed_from_u64(mix64(seed ^ mix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }

    /// Child stream; consumes one draw from `self`.
    pub fn fork(&mut self, tag: u64) -> Self {
        let s = self.inner.next_u64();
        Self::derive(s, tag)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_vec(&mut self, n: usize, mean: f64, std: f64) -> Vec<f64> {
        (0..n).map(|_| mean + std * self.standard_normal()).collect()
    }

    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidArgument(format!("gamma shape {shape}: {e}")))?;
        Ok(g.sample(&mut self.inner))
    }

    /// One draw from `Dir(concentration · 1_k)`.
    pub fn dirichlet(&mut self, k: usize, concentration: f64) -> Result<Vec<f64>> {
        if k == 0 || !(concentration > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dirichlet needs k >= 1 and concentration > 0 (got k={k}, {concentration})"
            )));
        }
        loop {
            let mut g = (0..k).map(|_| self.gamma(concentration)).collect::<Result<Vec<_>>>()?;
            let s: f64 = g.iter().sum();
            // tiny concentrations can underflow every component
            if s > 0.0 && s.is_finite() {
                g.iter_mut().for_each(|v| *v /= s);
                return Ok(g);
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

/// `n` i.i.d. draws from `N(mean, std²)`.
pub fn rng_normal(rng: &mut Rng, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rng_normal needs finite mean and std >= 0 (got {mean}, {std})"
        )));
    }
    Ok(rng.normal_vec(n, mean, std))
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_constant() {
        let mut rng = Rng::seed_from_u64(1);
        let v = rng_normal(&mut rng, 5, 2.5, 0.0).unwrap();
        assert!(v.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn negative_std_rejected() {
        let mut rng = Rng::seed_from_u64(1);
        assert!(rng_normal(&mut rng, 5, 0.0, -1.0).is_err());
    }

    #[test]
    fn same_seed_same_stream() {
        let a = rng_normal(&mut Rng::seed_from_u64(42), 100, 0.0, 1.0).unwrap();
        let b = rng_normal(&mut Rng::seed_from_u64(42), 100, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c = rng_normal(&mut Rng::seed_from_u64(43), 100, 0.0, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_moments() {
        let v = rng_normal(&mut Rng::seed_from_u64(7), 10_000, 0.0, 1.0).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((std - 1.0).abs() < 0.05, "std {std}");
    }

    #[test]
    fn derived_streams_differ_by_tag() {
        let a = Rng::derive(9, 0).next_u64();
        let b = Rng::derive(9, 1).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, Rng::derive(9, 0).next_u64());
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut rng = Rng::seed_from_u64(3);
        for beta in [0.05, 0.2, 1.0, 1000.0] {
            let p = rng.dirichlet(5, beta).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
