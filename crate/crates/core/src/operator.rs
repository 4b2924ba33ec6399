//! The weak form of `A₁ = −(−Δ)ˢ_p`, the Gagliardo seminorm and the
//! elementary monotonicity inequality behind them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::FracOperatorParams;
use crate::error::{Error, Result};
use crate::galerkin::GalerkinSpace;
use crate::quadrature::FracQuadrature;

/// `[v]_{W^{s,p}}` of the zero extension of `v`.
pub fn gagliardo_seminorm(
    space: &GalerkinSpace,
    quad: &FracQuadrature,
    v: &DVector<f64>,
    params: &FracOperatorParams,
) -> Result<f64> {
    quad.check_consistent(space, params)?;
    check_vector(space, v)?;
    Ok(quad.seminorm(v))
}

/// `(A₁v, u) = −½·C(n,p,s)·∬ |v(x)−v(y)|^{p−2}(v(x)−v(y))(u(x)−u(y)) / |x−y|^{n+ps}`.
pub fn apply_a1_weak(
    space: &GalerkinSpace,
    quad: &FracQuadrature,
    v: &DVector<f64>,
    u: &DVector<f64>,
    params: &FracOperatorParams,
) -> Result<f64> {
    quad.check_consistent(space, params)?;
    check_vector(space, v)?;
    check_vector(space, u)?;
    Ok(quad.weak_form(v, u))
}

pub fn assemble_frac_stiffness(
    space: &GalerkinSpace,
    quad: &FracQuadrature,
    params: &FracOperatorParams,
) -> Result<DMatrix<f64>> {
    quad.check_consistent(space, params)?;
    quad.assemble_stiffness()
}

fn check_vector(space: &GalerkinSpace, v: &DVector<f64>) -> Result<()> {
    if v.len() != space.m() {
        return Err(Error::dim(format!("vector length {} != m = {}", v.len(), space.m())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("nodal vector contains non-finite entries"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest observed `LHS − RHS`.
    pub worst_margin: f64,
}

/// `(|a|^{p−2}a − |b|^{p−2}b)(a−b) − 2^{1−p}|a−b|^p`
pub fn scalar_monotonicity_margin(a: f64, b: f64, p: f64) -> f64 {
    let phi = |z: f64| z.abs().powf(p - 2.0) * z;
    (phi(a) - phi(b)) * (a - b) - 2f64.powf(1.0 - p) * (a - b).abs().powf(p)
}

/// Sample pairs uniformly in `[−10, 10]²` and count violations of the
/// scalar monotonicity inequality beyond `1e−12`.
pub fn check_scalar_monotonicity(p: f64, n_samples: usize, seed: u64) -> Result<MonotonicityReport> {
    if !(p >= 2.0) {
        return Err(Error::param(format!("p = {p} must be >= 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let a: f64 = rng.gen_range(-10.0..10.0);
        let b: f64 = rng.gen_range(-10.0..10.0);
        let margin = scalar_monotonicity_margin(a, b, p);
        if margin < -1e-12 {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    Ok(MonotonicityReport { samples: n_samples, violations, worst_margin: worst })
}
