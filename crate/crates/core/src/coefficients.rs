//! Built-in drift and diffusion coefficient families and their Nemytskii
//! evaluations on the finite-element space.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSpace, Mesh};
use crate::special::power_tail;

const SAMPLE_SEED: u64 = 0x5eed_c0ef;
const SAMPLE_RANGE: f64 = 10.0;

#[inline]
fn signed_pow(u: f64, e: f64) -> f64 {
    // |u|^e · sign(u)
    if e == 1.0 {
        u
    } else if e.fract() == 0.0 && e <= 32.0 {
        u.abs().powi(e as i32 - 1) * u
    } else {
        u.abs().powf(e) * u.signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftFamily {
    /// `f(u) = −δ|u|^{q−2}u`
    #[default]
    Power,
    /// `f ≡ 0`; only useful for testing, never admissible.
    Zero,
}

/// Drift `f(t,x,u)` with the constants of the weak and strong monotonicity,
/// coercivity and growth conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    pub family: DriftFamily,
    pub q: f64,
    /// Amplitude `δ` of the power family.
    pub delta: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// 0 means only weak monotonicity is claimed.
    pub delta3: f64,
    pub phi1_norm: f64,
    pub phi2_norm: f64,
}

impl DriftSpec {
    /// `f(u) = −δ|u|^{q−2}u` with `δ₁ = δ₂ = δ` and `δ₃ = δ/2`.
    pub fn power(q: f64, delta: f64) -> Result<Self> {
        if !(q >= 2.0) || !q.is_finite() {
            return Err(Error::param(format!("drift exponent q = {q} must be >= 2")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::param(format!("drift amplitude delta = {delta} must be > 0")));
        }
        let spec = Self {
            family: DriftFamily::Power,
            q,
            delta,
            delta1: delta,
            delta2: delta,
            delta3: 0.5 * delta,
            phi1_norm: 0.0,
            phi2_norm: 0.0,
        };
        spec.verify_sampled(2000, SAMPLE_SEED)?;
        Ok(spec)
    }

    /// `f(u) = −δu`.
    pub fn linear(delta: f64) -> Result<Self> {
        Self::power(2.0, delta)
    }

    pub fn zero() -> Self {
        Self {
            family: DriftFamily::Zero,
            q: 2.0,
            delta: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            delta3: 0.0,
            phi1_norm: 0.0,
            phi2_norm: 0.0,
        }
    }

    /// Claim a smaller strong-monotonicity constant; re-verified by sampling.
    pub fn with_delta3(mut self, delta3: f64) -> Result<Self> {
        if !(delta3 >= 0.0) {
            return Err(Error::param(format!("delta3 = {delta3} must be >= 0")));
        }
        self.delta3 = delta3;
        self.verify_sampled(2000, SAMPLE_SEED)?;
        Ok(self)
    }

    pub fn is_zero(&self) -> bool {
        self.family == DriftFamily::Zero
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        match self.family {
            DriftFamily::Power => -self.delta * signed_pow(u, self.q - 1.0),
            DriftFamily::Zero => 0.0,
        }
    }

    /// Check weak/strong monotonicity, coercivity and growth on random pairs.
    pub fn verify_sampled(&self, n: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = self.q;
        for _ in 0..n {
            let u1: f64 = rng.gen_range(-SAMPLE_RANGE..SAMPLE_RANGE);
            let u2: f64 = rng.gen_range(-SAMPLE_RANGE..SAMPLE_RANGE);
            let (f1, f2) = (self.f(u1), self.f(u2));
            let scale = 1e-12 * (1.0 + self.delta * (u1.abs() + u2.abs()).powf(q));
            let mono = (f1 - f2) * (u1 - u2);
            if mono > scale {
                return Err(Error::param("drift violates weak monotonicity"));
            }
            let strong = -self.delta3 * (u1.abs().powf(q - 2.0) + u2.abs().powf(q - 2.0)) * (u1 - u2).powi(2);
            if mono > strong + scale {
                return Err(Error::param(format!("drift violates strong monotonicity with delta3 = {}", self.delta3)));
            }
            if f1 * u1 > -self.delta1 * u1.abs().powf(q) + self.phi1_norm + scale {
                return Err(Error::param("drift violates the coercivity bound"));
            }
            if f1.abs() > self.delta2 * u1.abs().powf(q - 1.0) + self.phi2_norm + scale {
                return Err(Error::param("drift violates the growth bound"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoForm {
    /// `h ≡ 0`
    #[default]
    None,
    /// `ρ(u) = u/(1+|u|)`
    Saturating,
    /// `ρ(u) = u`
    Linear,
}

/// `h(t,x,u) = φ₃(t)·ρ(u)` with `ρ` 1-Lipschitz and `ρ(0) = 0`. `φ₃` is
/// constant in time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LipschitzPerturbationSpec {
    pub phi3: f64,
    pub rho: RhoForm,
}

impl LipschitzPerturbationSpec {
    pub fn new(phi3: f64, rho: RhoForm) -> Result<Self> {
        if !(phi3 >= 0.0) || !phi3.is_finite() {
            return Err(Error::param(format!("phi3 = {phi3} must be finite and >= 0")));
        }
        Ok(Self { phi3, rho })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn phi3_at(&self, _t: f64) -> f64 {
        match self.rho {
            RhoForm::None => 0.0,
            _ => self.phi3,
        }
    }

    #[inline]
    pub fn h(&self, t: f64, u: f64) -> f64 {
        let rho = match self.rho {
            RhoForm::None => return 0.0,
            RhoForm::Saturating => u / (1.0 + u.abs()),
            RhoForm::Linear => u,
        };
        self.phi3_at(t) * rho
    }
}

/// `a_i = b₀·i^{−r}` for `i ≥ 1`, optionally cut to zero beyond `cutoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSequence {
    pub b0: f64,
    pub r: f64,
    pub cutoff: Option<usize>,
}

impl PowerSequence {
    pub fn new(b0: f64, r: f64, cutoff: Option<usize>) -> Result<Self> {
        if !(b0 >= 0.0) || !b0.is_finite() {
            return Err(Error::param(format!("sequence amplitude {b0} must be finite and >= 0")));
        }
        if !r.is_finite() || (cutoff.is_none() && !(r > 1.0) && b0 > 0.0) {
            return Err(Error::param(format!("sequence decay r = {r} must exceed 1 without a cutoff")));
        }
        if cutoff == Some(0) {
            return Err(Error::param("sequence cutoff must be >= 1"));
        }
        Ok(Self { b0, r, cutoff })
    }

    pub fn zero() -> Self {
        Self { b0: 0.0, r: 2.0, cutoff: None }
    }

    /// Term `i` (1-based).
    pub fn term(&self, i: usize) -> f64 {
        if i == 0 || self.cutoff.is_some_and(|c| i > c) {
            0.0
        } else {
            self.b0 * (i as f64).powf(-self.r)
        }
    }

    /// `Σ_{i ≥ 1} a_i`
    pub fn sum(&self) -> f64 {
        self.tail(0)
    }

    /// `Σ_{i > n} a_i`
    pub fn tail(&self, n: usize) -> f64 {
        if self.b0 == 0.0 {
            return 0.0;
        }
        match self.cutoff {
            Some(c) => ((n + 1)..=c).map(|i| self.term(i)).sum(),
            None => self.b0 * power_tail(self.r, n + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Sigma1Spec {
    #[default]
    None,
    /// `σ_{1,i}(x) = a₀·i^{−r}·√(2/L)·sin(iπ(x−a)/L)`
    Sine { a0: f64, r: f64 },
}

/// Lower bound on `γ_i/β_i` that makes `σ_{2,i}(u) = √β_i·sign(u)|u|^{p₁/2}`
/// locally Lipschitz with constant `γ_i`.
pub fn lipschitz_ratio(p1: f64) -> f64 {
    if p1 == 2.0 {
        1.0 / 3.0
    } else {
        p1 * p1 / 4.0
    }
}

/// Diagonal superlinear noise `σ_i(t,x,u) = σ_{1,i}(t,x) + σ_{2,i}(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperlinearNoiseSpec {
    pub p1: f64,
    pub beta: PowerSequence,
    pub gamma: PowerSequence,
    pub sigma1: Sigma1Spec,
}

impl SuperlinearNoiseSpec {
    pub fn new(p1: f64, beta: PowerSequence, gamma: PowerSequence, sigma1: Sigma1Spec) -> Result<Self> {
        if !(p1 >= 2.0) || !p1.is_finite() {
            return Err(Error::param(format!("noise exponent p1 = {p1} must be >= 2")));
        }
        if beta.b0 > 0.0 {
            let k = lipschitz_ratio(p1);
            let covered = gamma.b0 >= k * beta.b0 * (1.0 - 1e-12)
                && gamma.r <= beta.r
                && match (beta.cutoff, gamma.cutoff) {
                    (_, None) => true,
                    (Some(cb), Some(cg)) => cg >= cb,
                    (None, Some(_)) => false,
                };
            if !covered {
                return Err(Error::param(format!(
                    "gamma sequence must dominate {k}·beta termwise (need gamma.b0 >= {k}·beta.b0, gamma.r <= beta.r, gamma cutoff >= beta cutoff)"
                )));
            }
        }
        if let Sigma1Spec::Sine { a0, r } = sigma1 {
            if !a0.is_finite() || !(r > 0.5) {
                return Err(Error::param(format!("sigma1 decay r = {r} must exceed 1/2")));
            }
        }
        let spec = Self { p1, beta, gamma, sigma1 };
        spec.verify_sampled(2000, SAMPLE_SEED)?;
        Ok(spec)
    }

    /// No noise at all.
    pub fn zero() -> Self {
        Self { p1: 2.0, beta: PowerSequence::zero(), gamma: PowerSequence::zero(), sigma1: Sigma1Spec::None }
    }

    pub fn is_zero(&self) -> bool {
        self.beta.b0 == 0.0 && matches!(self.sigma1, Sigma1Spec::None | Sigma1Spec::Sine { a0: 0.0, .. })
    }

    pub fn sum_beta(&self) -> f64 {
        self.beta.sum()
    }

    pub fn sum_gamma(&self) -> f64 {
        self.gamma.sum()
    }

    #[inline]
    pub fn sigma2(&self, i: usize, u: f64) -> f64 {
        let b = self.beta.term(i);
        if b == 0.0 {
            return 0.0;
        }
        b.sqrt() * signed_pow(u, 0.5 * self.p1)
    }

    #[inline]
    pub fn sigma1(&self, i: usize, mesh: &Mesh, _t: f64, x: f64) -> f64 {
        match self.sigma1 {
            Sigma1Spec::None => 0.0,
            Sigma1Spec::Sine { a0, r } => {
                let len = mesh.b - mesh.a;
                a0 * (i as f64).powf(-r)
                    * (2.0 / len).sqrt()
                    * (i as f64 * std::f64::consts::PI * (x - mesh.a) / len).sin()
            }
        }
    }

    /// `Σ_{i ≤ n} ‖σ_{1,i}(t)‖²_{L²}`; the sine fields are L²-orthogonal with
    /// norm `a₀ i^{−r}`.
    pub fn sigma1_sq_sum(&self, n_noise: usize) -> f64 {
        match self.sigma1 {
            Sigma1Spec::None => 0.0,
            Sigma1Spec::Sine { a0, r } => (1..=n_noise).map(|i| a0 * a0 * (i as f64).powf(-2.0 * r)).sum(),
        }
    }

    pub fn verify_sampled(&self, n: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1 = self.p1;
        let top = self.beta.cutoff.unwrap_or(64).min(64);
        for k in 0..n {
            let i = 1 + k % top;
            let (b, g) = (self.beta.term(i), self.gamma.term(i));
            let u1: f64 = rng.gen_range(-SAMPLE_RANGE..SAMPLE_RANGE);
            let u2: f64 = rng.gen_range(-SAMPLE_RANGE..SAMPLE_RANGE);
            let (s1, s2) = (self.sigma2(i, u1), self.sigma2(i, u2));
            let tol = 1e-12 * (1.0 + b * (u1.abs() + u2.abs()).powf(p1));
            if s1 * s1 > g + b * u1.abs().powf(p1) + tol {
                return Err(Error::param(format!("sigma2 violates the growth bound at i = {i}")));
            }
            let lip = g * (1.0 + u1.abs().powf(p1 - 2.0) + u2.abs().powf(p1 - 2.0)) * (u1 - u2).powi(2);
            if (s1 - s2).powi(2) > lip + tol {
                return Err(Error::param(format!("sigma2 violates the local Lipschitz bound at i = {i}")));
            }
        }
        Ok(())
    }
}

/// Pointwise nodal evaluation of `f(v) + h(t, v)`.
pub fn eval_drift(spec: &DriftSpec, hspec: &LipschitzPerturbationSpec, t: f64, v: &DVector<f64>) -> DVector<f64> {
    v.map(|u| spec.f(u) + hspec.h(t, u))
}

/// Galerkin load `∫ (f + h)(t, v(x)) φ_j dx` of the composition with the
/// interpolant.
pub fn drift_load(
    space: &GalerkinSpace,
    spec: &DriftSpec,
    hspec: &LipschitzPerturbationSpec,
    t: f64,
    v: &DVector<f64>,
) -> DVector<f64> {
    space.nemytskii_load(v, |_, u| spec.f(u) + hspec.h(t, u))
}

/// Nodal values of `σ_i(t,·,v(·))`, one column per noise direction.
pub fn eval_b(spec: &SuperlinearNoiseSpec, mesh: &Mesh, t: f64, v: &DVector<f64>, n_noise: usize) -> DMatrix<f64> {
    let nodes = mesh.interior_nodes();
    DMatrix::from_fn(v.len(), n_noise, |j, c| {
        let i = c + 1;
        spec.sigma1(i, mesh, t, nodes[j]) + spec.sigma2(i, v[j])
    })
}

/// Galerkin loads `∫ σ_i(t,x,v(x)) φ_j dx` as columns.
pub fn noise_loads(
    space: &GalerkinSpace,
    spec: &SuperlinearNoiseSpec,
    t: f64,
    v: &DVector<f64>,
    n_noise: usize,
) -> DMatrix<f64> {
    let mesh = *space.mesh();
    let mut out = DMatrix::zeros(space.m(), n_noise);
    for c in 0..n_noise {
        let i = c + 1;
        if spec.beta.term(i) == 0.0 && matches!(spec.sigma1, Sigma1Spec::None) {
            continue;
        }
        let col = space.nemytskii_load(v, |x, u| spec.sigma1(i, &mesh, t, x) + spec.sigma2(i, u));
        out.set_column(c, &col);
    }
    out
}

/// `(Σ_{i ≤ n_noise} ‖σ_i(t,·,v)‖²_{L²})^{1/2}` for the interpolant of `v`.
pub fn hs_norm_b(space: &GalerkinSpace, spec: &SuperlinearNoiseSpec, t: f64, v: &DVector<f64>, n_noise: usize) -> f64 {
    let mesh = *space.mesh();
    (1..=n_noise)
        .map(|i| space.nemytskii_sq_norm(v, |x, u| spec.sigma1(i, &mesh, t, x) + spec.sigma2(i, u)))
        .sum::<f64>()
        .sqrt()
}

/// Right-hand side of the Hilbert–Schmidt growth bound
/// `2Σ‖σ_{1,i}‖² + 2|𝒪|Σγ_i + 2Σβ_i‖v‖^{p₁}_{L^{p₁}}` over the retained directions.
pub fn hs_growth_bound(space: &GalerkinSpace, spec: &SuperlinearNoiseSpec, v: &DVector<f64>, n_noise: usize) -> f64 {
    let len = space.domain().length();
    let sum_b: f64 = (1..=n_noise).map(|i| spec.beta.term(i)).sum();
    let sum_g: f64 = (1..=n_noise).map(|i| spec.gamma.term(i)).sum();
    2.0 * spec.sigma1_sq_sum(n_noise) + 2.0 * len * sum_g + 2.0 * sum_b * space.lp_norm_pow(v, spec.p1)
}

/// Transport multipliers `g_i` (nodal values at interior nodes) and the
/// bounds of the Hilbert–Schmidt growth and Lipschitz conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportNoiseSpec {
    pub g: Vec<DVector<f64>>,
    pub delta4: f64,
    pub delta5: f64,
    pub phi4: f64,
}

impl TransportNoiseSpec {
    /// `δ₄ = δ₅ = ½·C(n,2,s)·Σ‖g_i‖²_{L^∞}`.
    pub fn new(g: Vec<DVector<f64>>, c2: f64) -> Result<Self> {
        if g.iter().any(|gi| gi.iter().any(|x| !x.is_finite())) {
            return Err(Error::param("transport multiplier contains non-finite values"));
        }
        if !(c2 > 0.0) {
            return Err(Error::param("kernel constant must be positive"));
        }
        let delta = 0.5 * c2 * g.iter().map(|gi| gi.amax().powi(2)).sum::<f64>();
        Ok(Self { g, delta4: delta, delta5: delta, phi4: 0.0 })
    }

    pub fn none() -> Self {
        Self { g: Vec::new(), delta4: 0.0, delta5: 0.0, phi4: 0.0 }
    }

    /// `g_i(x) = a·i^{−r}·sin(iπ(x−a)/L)` at the interior nodes, `i = 1..=count`.
    pub fn sine_family(mesh: &Mesh, amplitude: f64, decay: f64, count: usize, c2: f64) -> Result<Self> {
        let len = mesh.b - mesh.a;
        let nodes = mesh.interior_nodes();
        let g = (1..=count)
            .map(|i| {
                let amp = amplitude * (i as f64).powf(-decay);
                DVector::from_iterator(
                    nodes.len(),
                    nodes.iter().map(|x| amp * (i as f64 * std::f64::consts::PI * (x - mesh.a) / len).sin()),
                )
            })
            .collect();
        Self::new(g, c2)
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }
}

/// Discrete `(−Δ)^{s/2}` and the multiplication operators for transport noise.
///
/// With `SΦ = MΦΛ`, `ΦᵀMΦ = I`, the square root is `R = ΦΛ^{1/2}ΦᵀM`, which
/// is M-self-adjoint with `‖Ru‖²_M = uᵀSu`. Multiplication by `g` is the
/// L²-projected product `M⁻¹M_g`, also M-self-adjoint.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    sqrt_op: DMatrix<f64>,
    multipliers: Vec<DMatrix<f64>>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl TransportOperator {
    /// `stiffness` is the p = 2 fractional stiffness matrix of `space`.
    pub fn new(space: &GalerkinSpace, stiffness: &DMatrix<f64>, spec: &TransportNoiseSpec) -> Result<Self> {
        let m = space.m();
        if stiffness.nrows() != m || stiffness.ncols() != m {
            return Err(Error::dim("stiffness matrix does not match the space"));
        }
        if spec.g.iter().any(|g| g.len() != m) {
            return Err(Error::dim("transport multiplier length does not match the mesh"));
        }
        let (eigvals, eigvecs) = generalized_eigen(stiffness, space.mass())?;
        if eigvals.iter().any(|&l| l <= 0.0) {
            return Err(Error::Numerical("fractional stiffness is not positive definite".into()));
        }
        let half = DMatrix::from_diagonal(&eigvals.map(f64::sqrt));
        let sqrt_op = &eigvecs * half * eigvecs.transpose() * space.mass();
        let multipliers = spec
            .g
            .iter()
            .map(|g| {
                let mg = space.weighted_mass(g);
                let mut out = mg.clone();
                for (c, col) in mg.column_iter().enumerate() {
                    out.set_column(c, &space.riesz(&col.into_owned()));
                }
                out
            })
            .collect();
        Ok(Self { sqrt_op, multipliers, eigvals, eigvecs })
    }

    /// `(−Δ)^{s/2} v`
    pub fn sqrt_laplacian(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.sqrt_op * v
    }

    /// Projected product `g_i · w`.
    pub fn multiply(&self, i: usize, w: &DVector<f64>) -> DVector<f64> {
        &self.multipliers[i] * w
    }

    pub fn n_fields(&self) -> usize {
        self.multipliers.len()
    }

    /// Generalized eigenpairs of `(S, M)`, ascending, M-orthonormal.
    pub fn eigen(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.eigvals, &self.eigvecs)
    }
}

/// Ascending eigenpairs of `A x = λ B x` for symmetric `A` and SPD `B`, with
/// `XᵀBX = I`.
pub fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let n = c.nrows();
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let y = DMatrix::from_fn(n, order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((vals, l_inv.transpose() * y))
}

/// Columns `g_i·(−Δ)^{s/2}v`.
pub fn eval_g(op: &TransportOperator, v: &DVector<f64>) -> DMatrix<f64> {
    let rv = op.sqrt_laplacian(v);
    let mut out = DMatrix::zeros(v.len(), op.n_fields());
    for i in 0..op.n_fields() {
        out.set_column(i, &op.multiply(i, &rv));
    }
    out
}

/// `max_i |(g_i(−Δ)^{s/2}u, v) − (u, (−Δ)^{s/2}(g_i v))|` in L².
pub fn check_adjoint_identity(space: &GalerkinSpace, op: &TransportOperator, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let ru = op.sqrt_laplacian(u);
    (0..op.n_fields())
        .map(|i| {
            let lhs = space.inner(&op.multiply(i, &ru), v);
            let rhs = space.inner(u, &op.sqrt_laplacian(&op.multiply(i, v)));
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max)
}
