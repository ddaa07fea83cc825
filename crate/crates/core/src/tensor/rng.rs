use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

use super::Matrix;
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th sub-stream of `seed`.
///
/// Injective in `index` for a fixed `seed`, so sibling streams never share a
/// seed.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    seed ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

/// xoshiro256** generator seeded through a SplitMix64 expansion of a 64-bit
/// seed. Streams are bit-exact across platforms.
#[derive(Debug, Clone)]
pub struct RngState {
    inner: Xoshiro256StarStar,
    seed: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sub-stream `index` of this state's seed.
    pub fn substream(&self, index: u64) -> RngState {
        RngState::new(sub_seed(self.seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_scalar(&mut self, lo: f64, hi: f64) -> Result<f64> {
        let dist = Self::uniform_dist(lo, hi)?;
        Ok(dist.sample(&mut self.inner))
    }

    /// Matrix of i.i.d. draws from [lo, hi), filled row-major.
    pub fn uniform(&mut self, lo: f64, hi: f64, rows: usize, cols: usize) -> Result<Matrix> {
        let dist = Self::uniform_dist(lo, hi)?;
        let data = (0..rows * cols).map(|_| dist.sample(&mut self.inner)).collect();
        Matrix::from_vec(rows, cols, data)
    }

    /// Matrix of i.i.d. normal draws.
    pub fn normal(&mut self, mean: f64, std_dev: f64, rows: usize, cols: usize) -> Result<Matrix> {
        if !(std_dev >= 0.0 && std_dev.is_finite() && mean.is_finite()) {
            return Err(Error::Param(format!("bad normal parameters N({mean}, {std_dev}^2)")));
        }
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.inner);
                mean + std_dev * z
            })
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    fn uniform_dist(lo: f64, hi: f64) -> Result<Uniform<f64>> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Param(format!("uniform range requires lo < hi, got [{lo}, {hi})")));
        }
        Uniform::new(lo, hi).map_err(|e| Error::Param(e.to_string()))
    }
}
