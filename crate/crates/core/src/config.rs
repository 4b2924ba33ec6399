//! Experiment configuration: TOML in, validated simulation objects out.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coefficients::{
    DriftSpec, LipschitzPerturbationSpec, PowerSequence, RhoForm, Sigma1Spec, SuperlinearNoiseSpec, TransportNoiseSpec,
};
use crate::domain::{kernel_constant, poincare_constant, DomainSpec, FracOperatorParams};
use crate::error::{Error, Result};
use crate::galerkin::BasisKind;
use crate::hypotheses::{
    check_theorem_1, check_theorem_2, check_theorem_3, theorem_1_params, theorem_2_params, theorem_3_params,
    AdmissibilityReport,
};
use crate::quadrature::QuadratureSettings;
use crate::setup::{Coefficients, Setup};
use crate::solver::{CapMode, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub n: u32,
    pub s: f64,
    pub p: f64,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self { n: 1, s: 0.5, p: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisName {
    #[default]
    Sine,
    Cholesky,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub a: f64,
    pub b: f64,
    pub exterior_truncation: f64,
    pub m: usize,
    pub n_modes: usize,
    pub basis: BasisName,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { a: 0.0, b: 1.0, exterior_truncation: 10.0, m: 32, n_modes: 16, basis: BasisName::Sine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub panel_rule: usize,
    pub near_diag_split: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let d = QuadratureSettings::default();
        Self { panel_rule: d.panel_rule, near_diag_split: d.near_diag_split }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DriftName {
    #[default]
    Power,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub family: DriftName,
    pub q: f64,
    pub delta: f64,
    /// Defaults to `delta/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta3: Option<f64>,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self { family: DriftName::Power, q: 4.0, delta: 1.0, delta3: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RhoName {
    #[default]
    None,
    Saturating,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzSection {
    pub phi3: f64,
    pub rho: RhoName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sigma1Name {
    #[default]
    None,
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub p1: f64,
    pub beta_b0: f64,
    pub beta_r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_cutoff: Option<usize>,
    pub gamma_b0: f64,
    pub gamma_r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_cutoff: Option<usize>,
    pub sigma1: Sigma1Name,
    pub sigma1_a0: f64,
    pub sigma1_r: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            p1: 2.0,
            beta_b0: 0.0,
            beta_r: 2.0,
            beta_cutoff: None,
            gamma_b0: 0.0,
            gamma_r: 2.0,
            gamma_cutoff: None,
            sigma1: Sigma1Name::None,
            sigma1_a0: 0.0,
            sigma1_r: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSection {
    /// Number of fields `g_i(x) = amplitude·i^{−decay}·sin(iπx)`; 0 disables.
    pub count: usize,
    pub amplitude: f64,
    pub decay: f64,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self { count: 0, amplitude: 0.0, decay: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CapName {
    #[default]
    Record,
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub t_end: f64,
    pub dt: f64,
    pub n_noise: usize,
    pub taming: bool,
    pub cap_r: f64,
    pub cap_mode: CapName,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_dt: Option<f64>,
    /// Modes used by `simulate`; defaults to `domain.n_modes`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_modes: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            t_end: d.t_end,
            dt: d.dt,
            n_noise: d.n_noise,
            taming: d.taming,
            cap_r: d.cap_r,
            cap_mode: CapName::Record,
            master_seed: d.master_seed,
            noise_dt: None,
            n_modes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShapeName {
    #[default]
    Sine,
    Bump,
    Hat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub shape: ShapeName,
    /// `L²` norm of the initial datum.
    pub scale: f64,
    /// Frequency of the `sine` shape.
    pub mode: usize,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { shape: ShapeName::Sine, scale: 1.0, mode: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessSection {
    pub n_paths: usize,
    pub p_values: Vec<f64>,
    pub x_scales: Vec<f64>,
    pub sigma: f64,
    pub mode_ladder: Vec<usize>,
    /// Step sizes of the time-refinement study; empty skips it.
    pub dt_ladder: Vec<f64>,
    pub flag_factor: f64,
    /// `‖x0 − x0′‖` in the uniqueness study.
    pub perturbation: f64,
    pub stability_tolerance: f64,
    /// Largest tolerated share of diverged paths before exit status 3.
    pub max_diverged_fraction: f64,
}

impl Default for HarnessSection {
    fn default() -> Self {
        Self {
            n_paths: 400,
            p_values: vec![1.0, 2.0],
            x_scales: vec![0.0, 1.0, 2.0, 4.0],
            sigma: 0.25,
            mode_ladder: vec![4, 8, 16],
            dt_ladder: Vec::new(),
            flag_factor: 3.0,
            perturbation: 1e-3,
            stability_tolerance: 0.1,
            max_diverged_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TheoremChoice {
    #[default]
    Auto,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesesSection {
    pub theorem: TheoremChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: OperatorSection,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub lipschitz: LipschitzSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub transport: TransportSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub harness: HarnessSection,
    #[serde(default)]
    pub hypotheses: HypothesesSection,
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

/// Everything a subcommand needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub setup: Setup,
    pub solver: SolverConfig,
    /// Nodal initial datum with `‖x0‖ = initial.scale`.
    pub x0: DVector<f64>,
    /// Unit-norm shape of `x0`.
    pub shape: DVector<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Parse the `# section.key = value` lines of an artifact header.
    pub fn from_header(text: &str) -> Result<Self> {
        let mut body = String::new();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("# ") else { continue };
            let Some((key, _)) = rest.split_once(" = ") else { continue };
            if key.contains('.') && !key.contains(' ') {
                body.push_str(rest);
                body.push('\n');
            }
        }
        Self::from_toml_str(&body)
    }

    /// Resolved configuration as `section.key = value` lines, one per field.
    pub fn header_lines(&self) -> Vec<String> {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut out = Vec::new();
        if let toml::Value::Table(sections) = value {
            for (section, body) in sections {
                if let toml::Value::Table(fields) = body {
                    for (key, v) in fields {
                        out.push(format!("{section}.{key} = {v}"));
                    }
                }
            }
        }
        out
    }

    /// Artifact header: version line plus the resolved configuration.
    pub fn header(&self) -> Vec<String> {
        let mut out = vec![format!("fracspde {} nalgebra 0.33 rand_chacha 0.3", env!("CARGO_PKG_VERSION"))];
        out.extend(self.header_lines());
        out
    }

    pub fn header_text(&self) -> String {
        let mut s = String::new();
        for line in self.header() {
            let _ = writeln!(s, "# {line}");
        }
        s
    }

    pub fn theorem(&self) -> u8 {
        match self.hypotheses.theorem {
            TheoremChoice::One => 1,
            TheoremChoice::Two => 2,
            TheoremChoice::Three => 3,
            TheoremChoice::Auto if self.transport.count > 0 => 3,
            TheoremChoice::Auto if self.operator.p == 2.0 && self.drift.family == DriftName::Power => 2,
            TheoremChoice::Auto => 1,
        }
    }

    fn coefficients(&self, params: &FracOperatorParams, mesh: &crate::galerkin::Mesh) -> Result<Coefficients> {
        let d = &self.drift;
        let drift = match d.family {
            DriftName::Zero => DriftSpec::zero(),
            DriftName::Power => {
                let spec = field("drift", DriftSpec::power(d.q, d.delta))?;
                match d.delta3 {
                    Some(d3) => field("drift.delta3", spec.with_delta3(d3))?,
                    None => spec,
                }
            }
        };
        let rho = match self.lipschitz.rho {
            RhoName::None => RhoForm::None,
            RhoName::Saturating => RhoForm::Saturating,
            RhoName::Linear => RhoForm::Linear,
        };
        let lipschitz = field("lipschitz", LipschitzPerturbationSpec::new(self.lipschitz.phi3, rho))?;
        let n = &self.noise;
        let beta = field("noise.beta", PowerSequence::new(n.beta_b0, n.beta_r, n.beta_cutoff))?;
        let gamma = field("noise.gamma", PowerSequence::new(n.gamma_b0, n.gamma_r, n.gamma_cutoff))?;
        let sigma1 = match n.sigma1 {
            Sigma1Name::None => Sigma1Spec::None,
            Sigma1Name::Sine => {
                ensure(n.sigma1_a0 >= 0.0 && n.sigma1_a0.is_finite(), || {
                    format!("noise.sigma1_a0 = {}: must be finite and nonnegative", n.sigma1_a0)
                })?;
                ensure(n.sigma1_r > 0.5, || format!("noise.sigma1_r = {}: must exceed 1/2", n.sigma1_r))?;
                Sigma1Spec::Sine { a0: n.sigma1_a0, r: n.sigma1_r }
            }
        };
        let noise = field("noise", SuperlinearNoiseSpec::new(n.p1, beta, gamma, sigma1))?;
        let t = &self.transport;
        let transport = if t.count == 0 {
            TransportNoiseSpec::none()
        } else {
            ensure(params.p == 2.0, || format!("transport.count = {}: transport noise requires operator.p = 2", t.count))?;
            let c2 = kernel_constant(params.n, 2.0, params.s)?;
            field("transport", TransportNoiseSpec::sine_family(mesh, t.amplitude, t.decay, t.count, c2))?
        };
        Ok(Coefficients { drift, lipschitz, noise, transport })
    }

    fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            t_end: s.t_end,
            dt: s.dt,
            n_modes: s.n_modes.unwrap_or(self.domain.n_modes),
            n_noise: s.n_noise,
            taming: s.taming,
            cap_r: s.cap_r,
            cap_mode: match s.cap_mode {
                CapName::Record => CapMode::Record,
                CapName::Truncate => CapMode::Truncate,
            },
            master_seed: s.master_seed,
            noise_dt: s.noise_dt,
        }
    }

    fn validate_harness(&self) -> Result<()> {
        ensure(self.solver.master_seed <= i64::MAX as u64, || {
            format!("solver.master_seed = {}: must not exceed {}", self.solver.master_seed, i64::MAX)
        })?;
        let h = &self.harness;
        ensure(h.n_paths >= 1, || "harness.n_paths: must be >= 1".into())?;
        ensure(!h.p_values.is_empty() && h.p_values.iter().all(|p| *p >= 1.0 && p.is_finite()), || {
            format!("harness.p_values = {:?}: need at least one finite value >= 1", h.p_values)
        })?;
        ensure(!h.x_scales.is_empty() && h.x_scales.iter().all(|x| *x >= 0.0 && x.is_finite()), || {
            format!("harness.x_scales = {:?}: need finite nonnegative values", h.x_scales)
        })?;
        ensure(h.sigma > 0.0 && h.sigma < 0.5, || format!("harness.sigma = {}: must lie in (0, 1/2)", h.sigma))?;
        ensure(h.mode_ladder.len() >= 2 && h.mode_ladder.windows(2).all(|w| w[1] > w[0]), || {
            format!("harness.mode_ladder = {:?}: need at least 2 strictly increasing rungs", h.mode_ladder)
        })?;
        ensure(h.mode_ladder.iter().all(|&n| n >= 1 && n <= self.domain.n_modes), || {
            format!("harness.mode_ladder = {:?}: rungs must lie in 1..={}", h.mode_ladder, self.domain.n_modes)
        })?;
        ensure(h.dt_ladder.iter().all(|d| *d > 0.0 && d.is_finite()), || {
            format!("harness.dt_ladder = {:?}: step sizes must be positive", h.dt_ladder)
        })?;
        ensure(h.flag_factor > 1.0, || format!("harness.flag_factor = {}: must exceed 1", h.flag_factor))?;
        ensure(h.perturbation > 0.0 && h.perturbation.is_finite(), || {
            format!("harness.perturbation = {}: must be positive", h.perturbation)
        })?;
        ensure(h.stability_tolerance >= 0.0, || {
            format!("harness.stability_tolerance = {}: must be nonnegative", h.stability_tolerance)
        })?;
        ensure((0.0..=1.0).contains(&h.max_diverged_fraction), || {
            format!("harness.max_diverged_fraction = {}: must lie in [0, 1]", h.max_diverged_fraction)
        })
    }

    /// Validate every field and assemble the simulation objects.
    pub fn build(&self) -> Result<Experiment> {
        let o = &self.operator;
        let params = field("operator", FracOperatorParams::new(o.n, o.p, o.s))?;
        ensure(o.n == 1, || format!("operator.n = {}: only the one-dimensional discretization is implemented", o.n))?;
        let d = &self.domain;
        let domain = field("domain", DomainSpec::new(d.a, d.b, d.exterior_truncation))?;
        let settings = QuadratureSettings {
            panel_rule: self.quadrature.panel_rule,
            near_diag_split: self.quadrature.near_diag_split,
        };
        field("quadrature", settings.validate())?;
        ensure(d.m >= 1, || "domain.m: must be >= 1".into())?;
        ensure(d.n_modes >= 1 && d.n_modes <= d.m, || {
            format!("domain.n_modes = {}: must lie in 1..=domain.m ({})", d.n_modes, d.m)
        })?;
        ensure(self.initial.scale >= 0.0 && self.initial.scale.is_finite(), || {
            format!("initial.scale = {}: must be finite and nonnegative", self.initial.scale)
        })?;
        ensure(self.initial.mode >= 1, || "initial.mode: must be >= 1".into())?;
        ensure(self.solver.n_noise >= 1, || "solver.n_noise: must be >= 1".into())?;
        ensure(self.solver.cap_r > 0.0, || format!("solver.cap_r = {}: must be positive", self.solver.cap_r))?;
        if self.operator.p != 2.0 && d.basis == BasisName::Spectral {
            return Err(Error::Config("domain.basis = spectral: requires operator.p = 2".into()));
        }
        self.validate_harness()?;
        let mesh = crate::galerkin::Mesh::new(d.a, d.b, d.m);
        let coeffs = self.coefficients(&params, &mesh)?;
        let kind = match d.basis {
            BasisName::Sine => BasisKind::Sine,
            BasisName::Cholesky => BasisKind::Cholesky,
            BasisName::Spectral => BasisKind::Spectral,
        };
        let setup = Setup::with_basis_kind(params, domain, d.m, d.n_modes, kind, settings, coeffs)?;
        let solver = self.solver_config();
        solver.validate(&setup).map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(format!("solver: {other}")),
        })?;
        let shape = initial_shape(&setup, self.initial.shape, self.initial.mode)?;
        let x0 = &shape * self.initial.scale;
        Ok(Experiment { config: self.clone(), setup, solver, x0, shape })
    }
}

/// Unit-`L²` nodal initial shape.
pub fn initial_shape(setup: &Setup, shape: ShapeName, mode: usize) -> Result<DVector<f64>> {
    let dom = setup.space.domain();
    let (a, len) = (dom.a, dom.length());
    let nodes = setup.space.mesh().interior_nodes();
    let v = DVector::from_iterator(
        nodes.len(),
        nodes.iter().map(|&x| {
            let y = (x - a) / len;
            match shape {
                ShapeName::Sine => (mode as f64 * PI * y).sin(),
                ShapeName::Bump => 4.0 * y * (1.0 - y),
                ShapeName::Hat => 1.0 - (2.0 * y - 1.0).abs(),
            }
        }),
    );
    crate::harness::normalized(setup, &v)
}

impl Experiment {
    /// Admissibility of the configured coefficients for the configured theorem.
    pub fn admissibility(&self) -> Result<AdmissibilityReport> {
        let s = &self.setup;
        let c = &s.coeffs;
        let mut notes = Vec::new();
        match self.config.theorem() {
            1 => {
                let lambda = poincare_constant(&s.space, &s.quad, &s.params)?;
                let params = theorem_1_params(&s.params, &c.drift, &c.noise, lambda.lambda);
                notes.push(format!("lambda = {:.16e}", lambda.lambda));
                AdmissibilityReport::new(1, params, check_theorem_1(&s.params, &c.noise, &lambda), notes)
            }
            2 => {
                if s.params.p != 2.0 {
                    notes.push(format!("strongly monotone setting assumes p = 2 (got p = {})", s.params.p));
                }
                let params = theorem_2_params(&s.params, &c.drift, &c.noise);
                AdmissibilityReport::new(2, params, check_theorem_2(&c.drift, &c.noise), notes)
            }
            _ => {
                let check = check_theorem_3(&c.drift, &c.noise, &c.transport, &s.params)?;
                let params = theorem_3_params(&s.params, &c.drift, &c.noise, &c.transport);
                AdmissibilityReport::new(3, params, check, notes)
            }
        }
    }

    /// `x0 + ε·x0/‖x0‖` (or `ε·shape` for zero data), so `‖x0 − x0′‖ = ε`.
    pub fn perturbed_initial(&self) -> DVector<f64> {
        &self.x0 + &self.shape * self.config.harness.perturbation
    }
}
