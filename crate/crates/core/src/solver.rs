//! Drift-tamed Euler–Maruyama integration of the Galerkin SDE in modal
//! coordinates.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{RhoForm, Sigma1Spec, DriftFamily};
use crate::error::{Error, Result};
use crate::rng::{path_seed, BrownianIncrements};
use crate::setup::Setup;

/// What happens once the stopping functional reaches `cap_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapMode {
    /// Record the index and keep integrating.
    #[default]
    Record,
    /// End the path at the stopping index.
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub t_end: f64,
    pub dt: f64,
    pub n_modes: usize,
    pub n_noise: usize,
    pub taming: bool,
    pub cap_r: f64,
    pub cap_mode: CapMode,
    pub master_seed: u64,
    /// Resolution of the Brownian increments; `dt` must be a multiple. Runs
    /// that share it (and the seed) share Brownian paths.
    pub noise_dt: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt: 1.0 / 256.0,
            n_modes: 16,
            n_noise: 16,
            taming: true,
            cap_r: f64::INFINITY,
            cap_mode: CapMode::Record,
            master_seed: 0,
            noise_dt: None,
        }
    }
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let k = r.round();
    if !(k >= 1.0) || (r - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::Config(format!("{what}: ratio {r} is not a positive integer")));
    }
    Ok(k as usize)
}

impl SolverConfig {
    pub fn validate(&self, setup: &Setup) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("solver.t_end = {} must be positive", self.t_end)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("solver.dt = {} must be positive", self.dt)));
        }
        self.n_steps()?;
        self.substeps()?;
        if self.n_modes < 1 || self.n_modes > setup.space.n_modes() {
            return Err(Error::Config(format!(
                "solver.n_modes = {} must lie in 1..={}",
                self.n_modes,
                setup.space.n_modes()
            )));
        }
        if self.n_noise < 1 {
            return Err(Error::Config("solver.n_noise must be >= 1".into()));
        }
        if setup.coeffs.transport.len() > self.n_noise {
            return Err(Error::Config(format!(
                "solver.n_noise = {} is smaller than the number of transport fields {}",
                self.n_noise,
                setup.coeffs.transport.len()
            )));
        }
        if !(self.cap_r > 0.0) {
            return Err(Error::Config(format!("solver.cap_r = {} must be positive", self.cap_r)));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> Result<usize> {
        integer_ratio(self.t_end, self.dt, "t_end / dt")
    }

    /// Fine Brownian steps per time step.
    pub fn substeps(&self) -> Result<usize> {
        match self.noise_dt {
            None => Ok(1),
            Some(f) => integer_ratio(self.dt, f, "dt / noise_dt"),
        }
    }

    pub fn brownian(&self, path_index: u64) -> Result<BrownianIncrements> {
        let r = self.substeps()?;
        let n = self.n_steps()? * r;
        BrownianIncrements::generate(path_seed(self.master_seed, path_index), self.n_noise, n, self.dt / r as f64)
    }
}

/// A simulated Galerkin trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    /// Modal coefficients in the orthonormal basis.
    pub states: Vec<DVector<f64>>,
    pub l2_norm: Vec<f64>,
    pub seminorm: Vec<f64>,
    pub lq_norm: Vec<f64>,
    /// `Σ_j ‖Z(t_k)‖^{q_j}_{V_j}` over the active components.
    pub energy_rate: Vec<f64>,
    /// Trapezoidal `∫₀^{t_k}` of `energy_rate`.
    pub energy_integral: Vec<f64>,
    pub stopped_at: Option<usize>,
    pub diverged_at: Option<usize>,
    pub seed: u64,
    pub path_index: u64,
}

impl Path {
    fn new(seed: u64, path_index: u64) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            l2_norm: Vec::new(),
            seminorm: Vec::new(),
            lq_norm: Vec::new(),
            energy_rate: Vec::new(),
            energy_integral: Vec::new(),
            stopped_at: None,
            diverged_at: None,
            seed,
            path_index,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("path has at least the initial state")
    }

    fn push(&mut self, setup: &Setup, reduced: Option<&DMatrix<f64>>, t: f64, z: DVector<f64>) {
        let v = setup.space.synthesize(&z);
        let q = setup.coeffs.drift.q;
        let l2 = z.norm();
        let semi = setup.seminorm(&z, reduced);
        let lq = setup.space.lp_norm(&v, q);
        let mut rate = semi.powf(setup.params.p) + l2 * l2;
        if !setup.coeffs.drift.is_zero() {
            rate += lq.powf(q);
        }
        let integral = match (self.times.last(), self.energy_rate.last(), self.energy_integral.last()) {
            (Some(t0), Some(r0), Some(i0)) => i0 + 0.5 * (t - t0) * (r0 + rate),
            _ => 0.0,
        };
        self.times.push(t);
        self.states.push(z);
        self.l2_norm.push(l2);
        self.seminorm.push(semi);
        self.lq_norm.push(lq);
        self.energy_rate.push(rate);
        self.energy_integral.push(integral);
    }

    /// CSV with columns `time, l2_norm, gagliardo_seminorm, lq_norm,
    /// stopped_flag`, preceded by `# `-prefixed header lines.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "l2_norm", "gagliardo_seminorm", "lq_norm", "stopped_flag"])?;
        for k in 0..self.len() {
            let stopped = self.stopped_at.is_some_and(|s| k >= s);
            w.write_record([
                fmt(self.times[k]),
                fmt(self.l2_norm[k]),
                fmt(self.seminorm[k]),
                fmt(self.lq_norm[k]),
                u8::from(stopped).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// `ZNext = Z + dt·D/(1 + dt‖D‖) + noise`; plain Euler–Maruyama without taming.
pub fn tamed_step(z: &DVector<f64>, drift: &DVector<f64>, noise: &DVector<f64>, dt: f64, taming: bool) -> DVector<f64> {
    let factor = if taming { dt / (1.0 + dt * drift.norm()) } else { dt };
    z + drift * factor + noise
}

/// `‖Z(t_k)‖_H + Σ_j ∫₀^{t_k} ‖Z‖^{q_j}_{V_j} ds`
pub fn stopping_functional(path: &Path, k: usize) -> f64 {
    path.l2_norm[k] + path.energy_integral[k]
}

/// Modal coefficients of the nodal initial datum in the first `n` modes.
pub fn initial_modes(setup: &Setup, x0: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    if x0.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("initial datum contains non-finite values"));
    }
    setup.space.coefficients(x0, n)
}

pub fn simulate_path(setup: &Setup, config: &SolverConfig, x0: &DVector<f64>, path_index: u64) -> Result<Path> {
    config.validate(setup)?;
    let z0 = initial_modes(setup, x0, config.n_modes)?;
    let w = config.brownian(path_index)?;
    simulate_with_noise(setup, config, z0, &w, path_index)
}

/// Integrate from modal `z0` with prescribed Brownian increments.
pub fn simulate_with_noise(
    setup: &Setup,
    config: &SolverConfig,
    z0: DVector<f64>,
    w: &BrownianIncrements,
    path_index: u64,
) -> Result<Path> {
    config.validate(setup)?;
    let n = config.n_modes;
    if z0.len() != n {
        return Err(Error::dim(format!("initial state has {} modes, expected {n}", z0.len())));
    }
    let n_steps = config.n_steps()?;
    let r = config.substeps()?;
    if w.n_fine < n_steps * r || w.n_noise < config.n_noise {
        return Err(Error::dim("Brownian increments do not cover the time grid"));
    }
    let reduced = setup.reduced_stiffness(n);
    let reduced = reduced.as_ref();
    let h = setup.space.basis().columns(0, n).into_owned();
    let noise = &setup.coeffs.noise;
    let transport = setup.transport_operator();
    let mesh = *setup.space.mesh();
    let has_noise = !noise.is_zero() || transport.is_some();

    let mut path = Path::new(w.seed, path_index);
    path.push(setup, reduced, 0.0, z0);
    check_stop(&mut path, config, 0);
    let mut dw = vec![0.0; config.n_noise];

    for k in 0..n_steps {
        if config.cap_mode == CapMode::Truncate && path.stopped_at.is_some() {
            break;
        }
        let t = k as f64 * config.dt;
        let z = path.final_state();
        let drift = setup.modal_drift(t, z, reduced);
        let noise_modal = if has_noise {
            for (i, d) in dw.iter_mut().enumerate() {
                *d = w.coarse(i, k, r);
            }
            let v = &h * z;
            let mut dual = if noise.is_zero() {
                DVector::zeros(v.len())
            } else {
                setup.space.nemytskii_load(&v, |x, u| {
                    dw.iter()
                        .enumerate()
                        .map(|(i, d)| (noise.sigma1(i + 1, &mesh, t, x) + noise.sigma2(i + 1, u)) * d)
                        .sum()
                })
            };
            if let Some(op) = transport {
                let rv = op.sqrt_laplacian(&v);
                let mut acc = DVector::zeros(v.len());
                for (i, d) in dw.iter().enumerate().take(op.n_fields()) {
                    acc += op.multiply(i, &rv) * *d;
                }
                dual += setup.space.mass() * acc;
            }
            h.transpose() * dual
        } else {
            DVector::zeros(n)
        };
        let next = tamed_step(z, &drift, &noise_modal, config.dt, config.taming);
        if next.iter().any(|x| !x.is_finite()) || next.norm() > 1e150 {
            path.diverged_at = Some(k + 1);
            break;
        }
        path.push(setup, reduced, (k + 1) as f64 * config.dt, next);
        check_stop(&mut path, config, k + 1);
    }
    Ok(path)
}

fn check_stop(path: &mut Path, config: &SolverConfig, k: usize) {
    if path.stopped_at.is_none() && config.cap_r.is_finite() && stopping_functional(path, k) >= config.cap_r {
        path.stopped_at = Some(k);
    }
}

/// Scalar part `c` of `L = −HᵀSH + c` for the linear p = 2 configurations
/// with a closed-form solution.
fn linear_shift(setup: &Setup) -> Result<f64> {
    let c = &setup.coeffs;
    if setup.params.p != 2.0 {
        return Err(Error::Unsupported("reference solution requires p = 2".into()));
    }
    let shift = match c.drift.family {
        DriftFamily::Zero => 0.0,
        DriftFamily::Power if c.drift.q == 2.0 => -c.drift.delta,
        DriftFamily::Power => return Err(Error::Unsupported("reference solution requires a linear drift".into())),
    } + match c.lipschitz.rho {
        RhoForm::None => 0.0,
        RhoForm::Linear => c.lipschitz.phi3,
        RhoForm::Saturating => {
            return Err(Error::Unsupported("reference solution requires a linear perturbation".into()))
        }
    };
    if !c.noise.is_zero() && (c.noise.p1 != 2.0 || c.noise.sigma1 != Sigma1Spec::None) {
        return Err(Error::Unsupported("reference solution requires linear multiplicative noise".into()));
    }
    if !c.transport.is_empty() {
        return Err(Error::Unsupported("reference solution does not cover transport noise".into()));
    }
    Ok(shift)
}

/// Whether [`reference_solution_p2_linear`] applies to this setup.
pub fn has_exact_reference(setup: &Setup) -> bool {
    linear_shift(setup).is_ok()
}

/// Exact solution of the p = 2 Galerkin system with linear drift and scalar
/// multiplicative noise `σ_{2,i}(u) = √β_i u`:
/// `Z(t) = e^{Lt}z₀·exp(Σ_i √β_i W_i(t) − ½Σ_i β_i t)`, where `L = −HᵀSH − δ + φ₃`.
///
/// Evaluated on the `config.dt` grid with the Brownian increments of
/// `path_index`, so it shares noise with [`simulate_path`].
pub fn reference_solution_p2_linear(
    setup: &Setup,
    config: &SolverConfig,
    x0: &DVector<f64>,
    path_index: u64,
) -> Result<Path> {
    config.validate(setup)?;
    let shift = linear_shift(setup)?;
    let c = &setup.coeffs;
    let n = config.n_modes;
    let k = setup.reduced_stiffness(n).expect("p = 2 setup has a stiffness matrix");
    let eig = (-k).symmetric_eigen();
    let z0 = initial_modes(setup, x0, n)?;
    let w = config.brownian(path_index)?;
    let r = config.substeps()?;
    let y0 = eig.eigenvectors.transpose() * &z0;
    let betas: Vec<f64> = (1..=config.n_noise).map(|i| c.noise.beta.term(i)).collect();
    let sum_beta: f64 = betas.iter().sum();
    let reduced = setup.reduced_stiffness(n);

    let mut path = Path::new(w.seed, path_index);
    let mut xi = vec![0.0; config.n_noise];
    for step in 0..=config.n_steps()? {
        let t = step as f64 * config.dt;
        if step > 0 {
            for (i, x) in xi.iter_mut().enumerate() {
                *x += w.coarse(i, step - 1, r);
            }
        }
        let exponent: f64 = betas.iter().zip(&xi).map(|(b, x)| b.sqrt() * x).sum::<f64>() - 0.5 * sum_beta * t;
        let y = DVector::from_iterator(n, (0..n).map(|j| y0[j] * ((eig.eigenvalues[j] + shift) * t).exp()));
        let z = &eig.eigenvectors * y * exponent.exp();
        path.push(setup, reduced.as_ref(), t, z);
        check_stop(&mut path, config, step);
    }
    Ok(path)
}
