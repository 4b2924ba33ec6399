//! Finite-element realization of the Galerkin space `H_n = span{h_1,…,h_n}`.
//!
//! Functions are represented by their values at the `m` interior nodes of a
//! uniform mesh; the piecewise-linear interpolant vanishes at the endpoints
//! and is extended by zero outside the domain.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::special::gauss_legendre_unit;

/// Uniform mesh `a = x_0 < x_1 < … < x_{m+1} = b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub a: f64,
    pub b: f64,
    /// Number of interior nodes.
    pub m: usize,
    pub h: f64,
}

impl Mesh {
    pub fn new(a: f64, b: f64, m: usize) -> Self {
        Self { a, b, m, h: (b - a) / (m as f64 + 1.0) }
    }

    pub fn n_elements(&self) -> usize {
        self.m + 1
    }

    /// Coordinate of node `j`, `0 ≤ j ≤ m+1`.
    pub fn node(&self, j: usize) -> f64 {
        self.a + j as f64 * self.h
    }

    /// Interior node coordinates.
    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..=self.m).map(|j| self.node(j)).collect()
    }

    /// Nodal values at the two ends of element `e`, with the boundary zeros.
    #[inline]
    pub fn element_values(&self, v: &DVector<f64>, e: usize) -> (f64, f64) {
        let left = if e == 0 { 0.0 } else { v[e - 1] };
        let right = if e == self.m { 0.0 } else { v[e] };
        (left, right)
    }
}

/// How the L²-orthonormal basis is ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    /// M-normalized discrete sine vectors, ordered by frequency.
    #[default]
    Sine,
    /// Columns of `L^{−T}` with `M = LLᵀ`; nested spaces grow from the left end.
    Cholesky,
    /// Generalized eigenvectors of the p = 2 stiffness, by ascending eigenvalue.
    /// Built by `Setup`, which owns the stiffness.
    Spectral,
}

#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    mesh: Mesh,
    domain: DomainSpec,
    mass: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    basis: DMatrix<f64>,
    kind: BasisKind,
    rule: (Vec<f64>, Vec<f64>),
}

/// Build the space with the default (sine) basis ordering.
pub fn build_space(domain: DomainSpec, m: usize, n_modes: usize) -> Result<GalerkinSpace> {
    GalerkinSpace::new(domain, m, n_modes, BasisKind::Sine)
}

impl GalerkinSpace {
    pub fn new(domain: DomainSpec, m: usize, n_modes: usize, kind: BasisKind) -> Result<Self> {
        if n_modes < 1 {
            return Err(Error::dim("n_modes must be >= 1"));
        }
        if n_modes > m {
            return Err(Error::dim(format!("n_modes = {n_modes} exceeds mesh interior nodes m = {m}")));
        }
        let mesh = Mesh::new(domain.a, domain.b, m);
        let h = mesh.h;
        let mass = DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
            0 => 2.0 * h / 3.0,
            1 => h / 6.0,
            _ => 0.0,
        });
        let mass_chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("mass matrix not positive definite".into()))?;
        let basis = match kind {
            BasisKind::Sine => {
                let mut basis = DMatrix::from_fn(m, n_modes, |j, k| {
                    ((k + 1) as f64 * PI * (j + 1) as f64 / (m as f64 + 1.0)).sin()
                });
                for mut col in basis.column_iter_mut() {
                    let norm = (col.transpose() * &mass * &col).x.sqrt();
                    col /= norm;
                }
                basis
            }
            BasisKind::Cholesky => {
                let l_inv = mass_chol
                    .l()
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
                l_inv.transpose().columns(0, n_modes).into_owned()
            }
            BasisKind::Spectral => {
                return Err(Error::Unsupported("the spectral basis is built from an assembled stiffness".into()))
            }
        };
        Ok(Self { mesh, domain, mass, mass_chol, basis, kind, rule: gauss_legendre_unit(8) })
    }

    /// Replace the basis by the M-orthonormal columns of `basis`.
    pub fn with_basis(mut self, basis: DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        if basis.nrows() != self.m() || basis.ncols() < 1 {
            return Err(Error::dim(format!("basis is {}x{}, expected {} rows", basis.nrows(), basis.ncols(), self.m())));
        }
        let gram = basis.transpose() * &self.mass * &basis;
        let err = (gram - DMatrix::identity(basis.ncols(), basis.ncols())).amax();
        if !(err < 1e-8) {
            return Err(Error::Numerical(format!("basis is not M-orthonormal (error {err:e})")));
        }
        self.basis = basis;
        self.kind = kind;
        Ok(self)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn m(&self) -> usize {
        self.mesh.m
    }

    pub fn n_modes(&self) -> usize {
        self.basis.ncols()
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    /// Columns are `h_k` in nodal coordinates.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Solve `M x = rhs`: the Riesz representative of a dual vector.
    pub fn riesz(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.mass_chol.solve(rhs)
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.mass * v).x
    }

    pub fn l2_norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Coefficients `(v, h_k)`, `k < k_max`.
    pub fn coefficients(&self, v: &DVector<f64>, k_max: usize) -> Result<DVector<f64>> {
        self.check_k(k_max)?;
        let mv = &self.mass * v;
        Ok(self.basis.columns(0, k_max).transpose() * mv)
    }

    /// Nodal vector of `Σ_k z_k h_k`.
    pub fn synthesize(&self, z: &DVector<f64>) -> DVector<f64> {
        self.basis.columns(0, z.len()) * z
    }

    /// Orthogonal projection `P_k v` onto `span{h_1,…,h_k}` as a nodal vector.
    pub fn project(&self, v: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        if v.len() != self.m() {
            return Err(Error::dim(format!("vector length {} != m = {}", v.len(), self.m())));
        }
        let z = self.coefficients(v, k)?;
        Ok(self.basis.columns(0, k) * z)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k < 1 || k > self.n_modes() {
            return Err(Error::dim(format!("projection rank {k} outside 1..={}", self.n_modes())));
        }
        Ok(())
    }

    /// Value of the interpolant at `x`; zero outside the domain.
    pub fn eval(&self, v: &DVector<f64>, x: f64) -> f64 {
        let mesh = &self.mesh;
        if x <= mesh.a || x >= mesh.b {
            return 0.0;
        }
        let t = (x - mesh.a) / mesh.h;
        let e = (t.floor() as usize).min(mesh.m);
        let xi = t - e as f64;
        let (l, r) = mesh.element_values(v, e);
        l * (1.0 - xi) + r * xi
    }

    /// `∫ |v|^p` of the piecewise-linear interpolant, element by element in
    /// closed form.
    pub fn lp_norm_pow(&self, v: &DVector<f64>, p: f64) -> f64 {
        let mesh = &self.mesh;
        (0..mesh.n_elements())
            .map(|e| {
                let (l, r) = mesh.element_values(v, e);
                mesh.h * linear_power_mean(l, r, p)
            })
            .sum()
    }

    pub fn lp_norm(&self, v: &DVector<f64>, p: f64) -> f64 {
        self.lp_norm_pow(v, p).powf(1.0 / p)
    }

    /// Max nodal absolute value, which is the L^∞ norm of the interpolant.
    pub fn linf_norm(&self, v: &DVector<f64>) -> f64 {
        v.amax()
    }

    /// Dual vector `∫ |v|^{p−2} v φ_j`, by Gauss quadrature.
    pub fn lp_dual_vector(&self, v: &DVector<f64>, p: f64) -> DVector<f64> {
        self.nemytskii_load(v, |_, u| u.abs().powf(p - 2.0) * u)
    }

    /// Load vector `∫ g(x, v(x)) φ_j(x) dx` of the composition with the
    /// interpolant of `v`, by 8-point Gauss quadrature per element.
    pub fn nemytskii_load(&self, v: &DVector<f64>, g: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        let mesh = &self.mesh;
        let mut out = DVector::zeros(mesh.m);
        for e in 0..mesh.n_elements() {
            let (l, r) = mesh.element_values(v, e);
            let x0 = mesh.node(e);
            let (mut gl, mut gr) = (0.0, 0.0);
            for (xi, w) in self.rule.0.iter().zip(&self.rule.1) {
                let f = g(x0 + xi * mesh.h, l * (1.0 - xi) + r * xi) * w * mesh.h;
                gl += f * (1.0 - xi);
                gr += f * xi;
            }
            if e > 0 {
                out[e - 1] += gl;
            }
            if e < mesh.m {
                out[e] += gr;
            }
        }
        out
    }

    /// `∫_𝒪 g(x, v(x))² dx`, same quadrature as [`Self::nemytskii_load`].
    pub fn nemytskii_sq_norm(&self, v: &DVector<f64>, g: impl Fn(f64, f64) -> f64) -> f64 {
        let mesh = &self.mesh;
        let mut acc = 0.0;
        for e in 0..mesh.n_elements() {
            let (l, r) = mesh.element_values(v, e);
            let x0 = mesh.node(e);
            for (xi, w) in self.rule.0.iter().zip(&self.rule.1) {
                let f = g(x0 + xi * mesh.h, l * (1.0 - xi) + r * xi);
                acc += f * f * w * mesh.h;
            }
        }
        acc
    }

    /// Gram matrix `∫ g φ_j φ_k` of a piecewise-linear weight `g` (nodal values).
    pub fn weighted_mass(&self, g: &DVector<f64>) -> DMatrix<f64> {
        let mesh = &self.mesh;
        let m = mesh.m;
        let mut out = DMatrix::zeros(m, m);
        for e in 0..mesh.n_elements() {
            let (gl, gr) = mesh.element_values(g, e);
            let mut local = [[0.0; 2]; 2];
            for (xi, w) in self.rule.0.iter().zip(&self.rule.1) {
                let gv = gl * (1.0 - xi) + gr * xi;
                let phi = [1.0 - xi, *xi];
                for a in 0..2 {
                    for b in 0..2 {
                        local[a][b] += w * mesh.h * gv * phi[a] * phi[b];
                    }
                }
            }
            let idx = [e.checked_sub(1), (e < m).then_some(e)];
            for a in 0..2 {
                for b in 0..2 {
                    if let (Some(i), Some(j)) = (idx[a], idx[b]) {
                        out[(i, j)] += local[a][b];
                    }
                }
            }
        }
        out
    }
}

/// Mean of `|ℓ|^p` over `[0,1]` for the linear function from `l` to `r`.
fn linear_power_mean(l: f64, r: f64, p: f64) -> f64 {
    let scale = l.abs().max(r.abs());
    if scale == 0.0 {
        return 0.0;
    }
    if (r - l).abs() > 1e-4 * scale {
        // ∫_l^r |z|^p dz = (|r|^p r − |l|^p l)/(p+1)
        (r.abs().powf(p) * r - l.abs().powf(p) * l) / ((p + 1.0) * (r - l))
    } else {
        let (xs, ws) = gauss_legendre_unit(6);
        xs.iter().zip(&ws).map(|(x, w)| w * (l + (r - l) * x).abs().powf(p)).sum()
    }
}

/// Rank of the retained noise projection `Q_n` and the mass left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTruncation {
    pub n_noise: usize,
    pub tail_beta: f64,
    pub tail_gamma: f64,
}

impl NoiseTruncation {
    pub fn new(n_noise: usize, tail_beta: f64, tail_gamma: f64) -> Result<Self> {
        if n_noise < 1 {
            return Err(Error::dim("n_noise must be >= 1"));
        }
        if !(tail_beta >= 0.0 && tail_beta.is_finite() && tail_gamma >= 0.0 && tail_gamma.is_finite()) {
            return Err(Error::param("noise tail masses must be finite and nonnegative"));
        }
        Ok(Self { n_noise, tail_beta, tail_gamma })
    }
}
