//! Everything a simulation needs, assembled once and shared read-only.

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{
    drift_load, DriftSpec, LipschitzPerturbationSpec, SuperlinearNoiseSpec, TransportNoiseSpec, TransportOperator,
};
use crate::domain::{DomainSpec, FracOperatorParams};
use crate::error::{Error, Result};
use crate::coefficients::generalized_eigen;
use crate::galerkin::{BasisKind, GalerkinSpace};
use crate::quadrature::{FracQuadrature, QuadratureSettings};

#[derive(Debug, Clone)]
pub struct Coefficients {
    pub drift: DriftSpec,
    pub lipschitz: LipschitzPerturbationSpec,
    pub noise: SuperlinearNoiseSpec,
    pub transport: TransportNoiseSpec,
}

impl Coefficients {
    /// No drift, no perturbation, no noise.
    pub fn zero() -> Self {
        Self {
            drift: DriftSpec::zero(),
            lipschitz: LipschitzPerturbationSpec::none(),
            noise: SuperlinearNoiseSpec::zero(),
            transport: TransportNoiseSpec::none(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub params: FracOperatorParams,
    pub space: GalerkinSpace,
    pub quad: FracQuadrature,
    pub coeffs: Coefficients,
    /// `S` for p = 2.
    stiffness: Option<DMatrix<f64>>,
    /// `HᵀSH` on all modes of the space, for p = 2.
    reduced: Option<DMatrix<f64>>,
    transport_op: Option<TransportOperator>,
}

impl Setup {
    pub fn new(
        params: FracOperatorParams,
        domain: DomainSpec,
        m: usize,
        n_modes: usize,
        settings: QuadratureSettings,
        coeffs: Coefficients,
    ) -> Result<Self> {
        Self::with_basis_kind(params, domain, m, n_modes, BasisKind::Sine, settings, coeffs)
    }

    pub fn with_basis_kind(
        params: FracOperatorParams,
        domain: DomainSpec,
        m: usize,
        n_modes: usize,
        kind: BasisKind,
        settings: QuadratureSettings,
        coeffs: Coefficients,
    ) -> Result<Self> {
        if kind != BasisKind::Spectral {
            let space = GalerkinSpace::new(domain, m, n_modes, kind)?;
            return Self::from_space(params, space, settings, coeffs);
        }
        if params.p != 2.0 {
            return Err(Error::Unsupported(format!("the spectral basis requires p = 2 (got p = {})", params.p)));
        }
        let space = GalerkinSpace::new(domain, m, n_modes, BasisKind::Sine)?;
        let quad = FracQuadrature::new(&space, &params, settings)?;
        let s = quad.assemble_stiffness()?;
        let (_, mut vecs) = generalized_eigen(&s, space.mass())?;
        for mut col in vecs.column_iter_mut() {
            if col.sum() < 0.0 {
                col.neg_mut();
            }
        }
        let basis = vecs.columns(0, n_modes).into_owned();
        Self::from_space(params, space.with_basis(basis, BasisKind::Spectral)?, settings, coeffs)
    }

    pub fn from_space(
        params: FracOperatorParams,
        space: GalerkinSpace,
        settings: QuadratureSettings,
        coeffs: Coefficients,
    ) -> Result<Self> {
        let quad = FracQuadrature::new(&space, &params, settings)?;
        let (stiffness, reduced) = if params.p == 2.0 {
            let s = quad.assemble_stiffness()?;
            let h = space.basis();
            let r = h.transpose() * &s * h;
            (Some(s), Some((&r + r.transpose()) * 0.5))
        } else {
            (None, None)
        };
        let transport_op = if coeffs.transport.is_empty() {
            None
        } else {
            let s = stiffness.as_ref().ok_or_else(|| {
                Error::Unsupported(format!("transport noise requires p = 2 (got p = {})", params.p))
            })?;
            Some(TransportOperator::new(&space, s, &coeffs.transport)?)
        };
        Ok(Self { params, space, quad, coeffs, stiffness, reduced, transport_op })
    }

    pub fn stiffness(&self) -> Option<&DMatrix<f64>> {
        self.stiffness.as_ref()
    }

    /// `HᵀSH` restricted to the first `n` modes.
    pub fn reduced_stiffness(&self, n: usize) -> Option<DMatrix<f64>> {
        self.reduced.as_ref().map(|r| r.view((0, 0), (n, n)).into_owned())
    }

    pub fn transport_operator(&self) -> Option<&TransportOperator> {
        self.transport_op.as_ref()
    }

    /// Modal drift `P_n[A₁v + f(v) + h(t,v)]` for `v = Σ z_k h_k`.
    pub fn modal_drift(&self, t: f64, z: &DVector<f64>, reduced: Option<&DMatrix<f64>>) -> DVector<f64> {
        let n = z.len();
        let h = self.space.basis().columns(0, n);
        let v = &h * z;
        let mut dual = if self.coeffs.drift.is_zero() && self.coeffs.lipschitz.phi3_at(t) == 0.0 {
            DVector::zeros(self.space.m())
        } else {
            drift_load(&self.space, &self.coeffs.drift, &self.coeffs.lipschitz, t, &v)
        };
        let mut out = match reduced {
            Some(k) => -(k * z),
            None => {
                dual += self.quad.dual_vector(&v);
                DVector::zeros(n)
            }
        };
        out += h.transpose() * dual;
        out
    }

    /// `[v]_{W^{s,p}}` of the modal state.
    pub fn seminorm(&self, z: &DVector<f64>, reduced: Option<&DMatrix<f64>>) -> f64 {
        match reduced {
            Some(k) => (2.0 / self.params.c_kernel * z.dot(&(k * z))).max(0.0).sqrt(),
            None => self.quad.seminorm(&self.space.synthesize(z)),
        }
    }
}
