//! Per-path Brownian increments.
//!
//! Path `k` of an ensemble draws from a ChaCha8 generator keyed by a mix of
//! `(master_seed, k)`, with one ChaCha stream per noise direction. A path
//! therefore never depends on how many paths run, in which order, or on how
//! many noise directions are retained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of path `path_index` under `master_seed`.
pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(path_index.wrapping_add(0x51_7cc1_b727_220a)))
}

/// Generator for noise direction `direction` (0-based) of the path with the
/// given seed.
pub fn direction_rng(seed: u64, direction: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(direction as u64);
    rng
}

/// Brownian increments on a fine uniform grid, stored direction-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    pub dt_fine: f64,
    pub n_fine: usize,
    pub n_noise: usize,
    pub seed: u64,
    data: Vec<f64>,
}

impl BrownianIncrements {
    pub fn generate(seed: u64, n_noise: usize, n_fine: usize, dt_fine: f64) -> Result<Self> {
        if !(dt_fine > 0.0) || !dt_fine.is_finite() {
            return Err(Error::param(format!("Brownian time step {dt_fine} must be positive")));
        }
        let sd = dt_fine.sqrt();
        let mut data = Vec::with_capacity(n_noise * n_fine);
        for i in 0..n_noise {
            let mut rng = direction_rng(seed, i);
            for _ in 0..n_fine {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(sd * z);
            }
        }
        Ok(Self { dt_fine, n_fine, n_noise, seed, data })
    }

    pub fn zero(n_noise: usize, n_fine: usize, dt_fine: f64) -> Self {
        Self { dt_fine, n_fine, n_noise, seed: 0, data: vec![0.0; n_noise * n_fine] }
    }

    pub fn fine(&self, direction: usize) -> &[f64] {
        &self.data[direction * self.n_fine..(direction + 1) * self.n_fine]
    }

    /// Increment of direction `i` over coarse step `k` made of `r` fine steps.
    pub fn coarse(&self, direction: usize, k: usize, r: usize) -> f64 {
        self.fine(direction)[k * r..(k + 1) * r].iter().sum()
    }

    /// `W_i` at fine index `k`.
    pub fn value_at(&self, direction: usize, k: usize) -> f64 {
        self.fine(direction)[..k].iter().sum()
    }
}
