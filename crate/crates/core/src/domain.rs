//! Operator parameters, the kernel constant `C(n,p,s)` and the discrete
//! Poincaré constant.

use std::f64::consts::PI;

use nalgebra::{DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::galerkin::GalerkinSpace;
use crate::quadrature::FracQuadrature;
use crate::special::gamma;

/// Parameters of the fractional p-Laplacian `(−Δ)ˢ_p` on an `n`-dimensional
/// domain, together with the derived kernel constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOperatorParams {
    pub n: u32,
    pub s: f64,
    pub p: f64,
    pub c_kernel: f64,
}

impl FracOperatorParams {
    pub fn new(n: u32, p: f64, s: f64) -> Result<Self> {
        let c_kernel = kernel_constant(n, p, s)?;
        Ok(Self { n, s, p, c_kernel })
    }

    /// `n + p·s`, the exponent of the singular kernel.
    pub fn kernel_exponent(&self) -> f64 {
        self.n as f64 + self.p * self.s
    }
}

/// `C(n,p,s) = s·4ˢ·Γ((ps+p+n−2)/2) / (π^{n/2}·Γ(1−s))`.
pub fn kernel_constant(n: u32, p: f64, s: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::param(format!("dimension n = {n} must be >= 1")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::param(format!("order s = {s} must lie in (0, 1)")));
    }
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::param(format!("exponent p = {p} must be finite and >= 2")));
    }
    let nf = n as f64;
    let num = s * 4f64.powf(s) * gamma((p * s + p + nf - 2.0) / 2.0);
    let den = PI.powf(nf / 2.0) * gamma(1.0 - s);
    Ok(num / den)
}

/// The interval `(a, b)` and the half-width of the exterior region kept in the
/// tail integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub a: f64,
    pub b: f64,
    pub exterior_truncation: f64,
}

impl DomainSpec {
    pub fn new(a: f64, b: f64, exterior_truncation: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::param(format!("domain bounds ({a}, {b}) must be finite with a < b")));
        }
        if !(exterior_truncation > 0.0) {
            return Err(Error::param(format!(
                "exterior truncation {exterior_truncation} must be positive"
            )));
        }
        Ok(Self { a, b, exterior_truncation })
    }

    /// Interval `(a, b)` with the default truncation of ten diameters.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, 10.0 * (b - a))
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self { a: 0.0, b: 1.0, exterior_truncation: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoincareKind {
    /// Smallest generalized eigenvalue on the discrete space (p = 2).
    Certified,
    /// Best Rayleigh quotient found by a local search (p ≠ 2).
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareEstimate {
    pub lambda: f64,
    pub kind: PoincareKind,
}

/// Estimate of the best constant `λ` in `[v]^p ≥ λ‖v‖^p_{L^p}` over the
/// Galerkin space.
pub fn poincare_constant(
    space: &GalerkinSpace,
    quad: &FracQuadrature,
    params: &FracOperatorParams,
) -> Result<PoincareEstimate> {
    quad.check_consistent(space, params)?;
    if params.p == 2.0 {
        // [v]² = zᵀ (2/C · HᵀSH) z and ‖v‖² = zᵀz in the orthonormal basis.
        let stiff = quad.assemble_stiffness()?;
        let h = space.basis();
        let reduced = h.transpose() * &stiff * h * (2.0 / params.c_kernel);
        let reduced = (&reduced + reduced.transpose()) * 0.5;
        let eig = SymmetricEigen::new(reduced);
        let lambda = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        return Ok(PoincareEstimate { lambda, kind: PoincareKind::Certified });
    }
    Ok(PoincareEstimate { lambda: rayleigh_search(space, quad, params), kind: PoincareKind::Heuristic })
}

/// Projected gradient descent on `[v]^p / ‖v‖^p_{L^p}` in modal coordinates,
/// started from the lowest p = 2 mode and a few random vectors.
fn rayleigh_search(space: &GalerkinSpace, quad: &FracQuadrature, params: &FracOperatorParams) -> f64 {
    let p = params.p;
    let k = space.n_modes();
    let h = space.basis();
    let quotient = |z: &DVector<f64>| -> f64 {
        let v = h * z;
        quad.seminorm_pow(&v) / space.lp_norm_pow(&v, p)
    };
    let gradient = |z: &DVector<f64>| -> DVector<f64> {
        let v = h * z;
        let num = quad.seminorm_pow(&v);
        let den = space.lp_norm_pow(&v, p);
        // d[v]^p = −(2p/C)·(A₁v, ·)
        let dnum = quad.dual_vector(&v) * (-2.0 * p / params.c_kernel);
        let dden = space.lp_dual_vector(&v, p) * p;
        let g = (dnum * den - dden * num) / (den * den);
        h.transpose() * g
    };

    let mut starts: Vec<DVector<f64>> = Vec::new();
    let mut first = DVector::zeros(k);
    first[0] = 1.0;
    starts.push(first);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_7015);
    for _ in 0..4 {
        starts.push(DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng)));
    }

    let mut best = f64::INFINITY;
    for mut z in starts {
        z /= z.norm();
        let mut q = quotient(&z);
        let mut step = 0.1;
        for _ in 0..200 {
            let g = gradient(&z);
            let gn = g.norm();
            if gn < 1e-12 * q.max(1.0) {
                break;
            }
            let mut accepted = false;
            while step > 1e-10 {
                let mut trial = &z - &g * (step / gn);
                trial /= trial.norm();
                let qt = quotient(&trial);
                if qt < q {
                    z = trial;
                    q = qt;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best = best.min(q);
    }
    best
}

/// Smallest eigenvalue of the symmetric pencil `(a, b)` with `b` positive
/// definite.
#[cfg(test)]
pub(crate) fn smallest_generalized_eigenvalue(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> Result<f64> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(SymmetricEigen::new(c).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}
