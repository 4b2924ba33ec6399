//! Path ensembles and the statistics computed from them.
//!
//! Paths run in parallel on the current rayon pool and are collected in path
//! order; every reduction then walks that vector sequentially, so results do
//! not depend on the thread count.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::setup::Setup;
use crate::solver::{
    fmt, has_exact_reference, initial_modes, reference_solution_p2_linear, simulate_path, simulate_with_noise, Path,
    SolverConfig,
};

pub fn run_ensemble(setup: &Setup, config: &SolverConfig, x0: &DVector<f64>, n_paths: usize) -> Result<Vec<Path>> {
    config.validate(setup)?;
    (0..n_paths as u64).into_par_iter().map(|i| simulate_path(setup, config, x0, i)).collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn trapezoid(times: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (1..times.len()).map(|k| 0.5 * (times[k] - times[k - 1]) * (f(k - 1) + f(k))).sum()
}

/// Estimates for one `(p, ‖x‖)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCell {
    pub p: f64,
    pub x_scale: f64,
    /// `E sup_t ‖Z‖^{2p}`
    pub sup_moment: f64,
    /// `E (Σ_j ∫‖Z‖^{q_j}_{V_j})^p`
    pub energy_moment: f64,
    /// `E ∫‖Z‖^{2p−2} Σ_j ‖Z‖^{q_j}_{V_j}`
    pub cross_moment: f64,
    pub sup_std_err: f64,
    pub energy_std_err: f64,
    pub cross_std_err: f64,
    /// `sup_moment / (1 + ‖x‖^{2p})`
    pub affinity_ratio: f64,
    pub n_used: usize,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub p_values: Vec<f64>,
    pub x_scales: Vec<f64>,
    pub n_paths: usize,
    pub p_max: f64,
    pub flag_factor: f64,
    /// Row-major over `(p, x_scale)`.
    pub cells: Vec<MomentCell>,
}

impl MomentReport {
    pub fn cells_for(&self, p: f64) -> impl Iterator<Item = &MomentCell> {
        self.cells.iter().filter(move |c| c.p == p)
    }

    /// `max / min` of the affinity ratios across scales.
    pub fn affinity_spread(&self, p: f64) -> f64 {
        let (lo, hi) = self
            .cells_for(p)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(c.affinity_ratio), hi.max(c.affinity_ratio)));
        hi / lo
    }

    /// Exponents whose affinity ratios spread beyond `flag_factor`.
    pub fn flagged(&self) -> Vec<f64> {
        self.p_values.iter().copied().filter(|&p| !(self.affinity_spread(p) < self.flag_factor)).collect()
    }

    pub fn n_diverged(&self) -> usize {
        self.cells.iter().map(|c| c.n_diverged).sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "p",
            "x_scale",
            "sup_moment",
            "energy_moment",
            "cross_moment",
            "std_err",
            "affinity_ratio",
            "energy_std_err",
            "cross_std_err",
            "n_used",
            "n_diverged",
        ])?;
        for c in &self.cells {
            w.write_record([
                fmt(c.p),
                fmt(c.x_scale),
                fmt(c.sup_moment),
                fmt(c.energy_moment),
                fmt(c.cross_moment),
                fmt(c.sup_std_err),
                fmt(c.affinity_ratio),
                fmt(c.energy_std_err),
                fmt(c.cross_std_err),
                c.n_used.to_string(),
                c.n_diverged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unit-`L²` copy of the nodal shape `x0`.
pub fn normalized(setup: &Setup, x0: &DVector<f64>) -> Result<DVector<f64>> {
    let n = setup.space.l2_norm(x0);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::param("initial shape must have positive finite L2 norm"));
    }
    Ok(x0 / n)
}

/// Monte Carlo moments for initial data `x = scale·x0/‖x0‖`.
///
/// Every scale reuses path indices `0..n_paths`, so all cells see the same
/// Brownian paths.
#[allow(clippy::too_many_arguments)]
pub fn estimate_moments(
    setup: &Setup,
    config: &SolverConfig,
    x0_shape: &DVector<f64>,
    x_scales: &[f64],
    p_values: &[f64],
    n_paths: usize,
    p_max: f64,
    flag_factor: f64,
) -> Result<MomentReport> {
    if n_paths < 2 {
        return Err(Error::param("moment estimation needs at least 2 paths"));
    }
    for &p in p_values {
        if !(p >= 1.0) {
            return Err(Error::param(format!("moment exponent p = {p} must be >= 1")));
        }
        if !(p < p_max) {
            return Err(Error::param(format!(
                "moment exponent p = {p} is not below p_max = {p_max}; the uniform moment bounds only hold for p < 1/2 + min gamma1_j/gamma2_j"
            )));
        }
    }
    if x_scales.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::param("x_scales must be finite and nonnegative"));
    }
    let shape = normalized(setup, x0_shape)?;
    let mut cells = Vec::new();
    let mut per_scale = Vec::new();
    for &scale in x_scales {
        per_scale.push(run_ensemble(setup, config, &(&shape * scale), n_paths)?);
    }
    for &p in p_values {
        for (&scale, paths) in x_scales.iter().zip(&per_scale) {
            let (mut sup, mut energy, mut cross) = (Vec::new(), Vec::new(), Vec::new());
            for path in paths.iter().filter(|p| p.diverged_at.is_none()) {
                sup.push(path.l2_norm.iter().fold(0.0f64, |m, x| m.max(x.powf(2.0 * p))));
                energy.push(path.energy_integral.last().copied().unwrap_or(0.0).powf(p));
                cross.push(trapezoid(&path.times, |k| path.l2_norm[k].powf(2.0 * p - 2.0) * path.energy_rate[k]));
            }
            let (sm, se) = mean_and_stderr(&sup);
            let (em, ee) = mean_and_stderr(&energy);
            let (cm, ce) = mean_and_stderr(&cross);
            cells.push(MomentCell {
                p,
                x_scale: scale,
                sup_moment: sm,
                energy_moment: em,
                cross_moment: cm,
                sup_std_err: se,
                energy_std_err: ee,
                cross_std_err: ce,
                affinity_ratio: sm / (1.0 + scale.powf(2.0 * p)),
                n_used: sup.len(),
                n_diverged: paths.len() - sup.len(),
            });
        }
    }
    Ok(MomentReport {
        p_values: p_values.to_vec(),
        x_scales: x_scales.to_vec(),
        n_paths,
        p_max,
        flag_factor,
        cells,
    })
}

/// Discrete `W^{σ,2}(0,T;H)` norm of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlobodeckijNorm {
    /// `∬ ‖Z(t)−Z(s)‖² / |t−s|^{1+2σ}` over the grid, diagonal excluded.
    pub seminorm_sq: f64,
    /// `∫ ‖Z‖²`
    pub l2_sq: f64,
}

impl SlobodeckijNorm {
    pub fn seminorm(&self) -> f64 {
        self.seminorm_sq.sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.seminorm_sq + self.l2_sq).sqrt()
    }
}

/// Trapezoidal product rule for the time double integral; `states` are
/// coordinates in an orthonormal basis of H.
pub fn slobodeckij(times: &[f64], states: &[DVector<f64>], sigma: f64) -> Result<SlobodeckijNorm> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::param(format!("sigma = {sigma} must lie in (0, 1/2)")));
    }
    if times.len() < 2 || times.len() != states.len() {
        return Err(Error::dim("time seminorm needs at least 2 matching times and states"));
    }
    let n = times.len();
    let w: Vec<f64> = (0..n)
        .map(|k| {
            let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
            let right = if k + 1 < n { times[k + 1] - times[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    let mut semi = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            let d = (&states[i] - &states[j]).norm_squared();
            row += w[j] * d / (times[j] - times[i]).powf(1.0 + 2.0 * sigma);
        }
        semi += 2.0 * w[i] * row;
    }
    let l2: f64 = (0..n).map(|k| w[k] * states[k].norm_squared()).sum();
    Ok(SlobodeckijNorm { seminorm_sq: semi, l2_sq: l2 })
}

pub fn slobodeckij_time_seminorm(path: &Path, sigma: f64) -> Result<SlobodeckijNorm> {
    slobodeckij(&path.times, &path.states, sigma)
}

fn padded(z: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    out.rows_mut(0, z.len()).copy_from(z);
    out
}

/// `‖Z_a − Z_b‖²_{L²(0,T;H)}` for two paths on the same grid.
pub fn l2_time_gap_sq(a: &Path, b: &Path) -> f64 {
    let n = a.final_state().len().max(b.final_state().len());
    let len = a.len().min(b.len());
    trapezoid(&a.times[..len], |k| (padded(&a.states[k], n) - padded(&b.states[k], n)).norm_squared())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub mode_ladder: Vec<usize>,
    /// Root-mean-square over paths of `‖Z_{ladder[k+1]} − Z_{ladder[k]}‖_{L²(0,T;H)}`.
    pub pairwise_gaps: Vec<f64>,
    pub gap_std_errors: Vec<f64>,
    /// `log₂(gap_k / gap_{k+1})`
    pub slopes: Vec<f64>,
    /// Gap between the first and last rung.
    pub end_to_end_gap: f64,
    pub monotone: bool,
    pub triangle_ok: bool,
    pub n_paths: usize,
    pub n_diverged: usize,
}

impl ConvergenceReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rung", "gap", "slope", "n_modes_coarse", "n_modes_fine", "std_err"])?;
        for (k, gap) in self.pairwise_gaps.iter().enumerate() {
            let slope = if k == 0 { String::new() } else { fmt(self.slopes[k - 1]) };
            w.write_record([
                k.to_string(),
                fmt(*gap),
                slope,
                self.mode_ladder[k].to_string(),
                self.mode_ladder[k + 1].to_string(),
                fmt(self.gap_std_errors[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rms_with_stderr(sq: &[f64]) -> (f64, f64) {
    let (m, se) = mean_and_stderr(sq);
    let rms = m.max(0.0).sqrt();
    // delta method for sqrt of a mean
    let se = if rms > 0.0 { se / (2.0 * rms) } else { 0.0 };
    (rms, se)
}

/// Galerkin rungs driven by the same Brownian paths. The space must carry at
/// least `max(mode_ladder)` modes; rung `n` uses its leading `n` modes.
pub fn galerkin_convergence_study(
    setup: &Setup,
    config: &SolverConfig,
    x0: &DVector<f64>,
    mode_ladder: &[usize],
    n_paths: usize,
) -> Result<ConvergenceReport> {
    if mode_ladder.len() < 2 || mode_ladder.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("mode ladder needs at least 2 nondecreasing rungs"));
    }
    if n_paths < 1 {
        return Err(Error::param("n_paths must be >= 1"));
    }
    let rungs: Vec<SolverConfig> = mode_ladder.iter().map(|&n| SolverConfig { n_modes: n, ..*config }).collect();
    for r in &rungs {
        r.validate(setup)?;
    }
    let results: Vec<Result<Vec<Path>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| rungs.iter().map(|r| simulate_path(setup, r, x0, i)).collect())
        .collect();
    let mut per_path = Vec::with_capacity(n_paths);
    for r in results {
        per_path.push(r?);
    }
    let used: Vec<&Vec<Path>> =
        per_path.iter().filter(|ps| ps.iter().all(|p| p.diverged_at.is_none())).collect();
    let n_rungs = mode_ladder.len();
    let mut gaps = Vec::new();
    let mut errs = Vec::new();
    for k in 0..n_rungs - 1 {
        let sq: Vec<f64> = used.iter().map(|ps| l2_time_gap_sq(&ps[k], &ps[k + 1])).collect();
        let (g, e) = rms_with_stderr(&sq);
        gaps.push(g);
        errs.push(e);
    }
    let sq: Vec<f64> = used.iter().map(|ps| l2_time_gap_sq(&ps[0], &ps[n_rungs - 1])).collect();
    let end_to_end = rms_with_stderr(&sq).0;
    let slopes = gaps.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    // Minkowski in L²(Ω × (0,T); H) makes the RMS gaps subadditive.
    let triangle_ok = end_to_end <= gaps.iter().sum::<f64>() * (1.0 + 1e-12) + 1e-300;
    Ok(ConvergenceReport {
        mode_ladder: mode_ladder.to_vec(),
        pairwise_gaps: gaps,
        gap_std_errors: errs,
        slopes,
        end_to_end_gap: end_to_end,
        monotone,
        triangle_ok,
        n_paths,
        n_diverged: n_paths - used.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConvergenceReport {
    pub dt_ladder: Vec<f64>,
    /// `(E‖Z_dt(T) − Z_ref(T)‖²)^{1/2}`
    pub strong_errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log dt`.
    pub slope: f64,
    pub reference: ReferenceKind,
    pub n_paths: usize,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Closed-form linear solution.
    Exact,
    /// Tamed Euler–Maruyama at 1/16 of the finest step.
    FineStep,
}

impl TimeConvergenceReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dt", "strong_error", "std_err", "slope", "reference"])?;
        let reference = match self.reference {
            ReferenceKind::Exact => "exact",
            ReferenceKind::FineStep => "fine_step",
        };
        for (k, dt) in self.dt_ladder.iter().enumerate() {
            w.write_record([
                fmt(*dt),
                fmt(self.strong_errors[k]),
                fmt(self.std_errors[k]),
                fmt(self.slope),
                reference.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Strong error at `T` against a reference on the same Brownian paths: the
/// closed-form solution when the setup is linear with p = 2, otherwise the
/// scheme itself at 1/16 of the finest step. Increments are generated at the
/// reference resolution and summed for the coarser levels.
pub fn time_convergence_study(
    setup: &Setup,
    config: &SolverConfig,
    x0: &DVector<f64>,
    dt_ladder: &[f64],
    n_paths: usize,
) -> Result<TimeConvergenceReport> {
    if dt_ladder.len() < 2 || n_paths < 1 {
        return Err(Error::param("time convergence needs at least 2 step sizes and 1 path"));
    }
    let exact = has_exact_reference(setup);
    let finest = dt_ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let ref_dt = if exact { finest } else { finest / 16.0 };
    let levels: Vec<SolverConfig> =
        dt_ladder.iter().map(|&dt| SolverConfig { dt, noise_dt: Some(ref_dt), ..*config }).collect();
    let fine = SolverConfig { dt: ref_dt, noise_dt: Some(ref_dt), ..*config };
    fine.validate(setup)?;
    for l in &levels {
        l.validate(setup)?;
    }
    let z0 = initial_modes(setup, x0, config.n_modes)?;
    let results: Vec<Result<(Vec<f64>, bool)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let w = fine.brownian(i)?;
            let reference = if exact {
                reference_solution_p2_linear(setup, &fine, x0, i)?
            } else {
                simulate_with_noise(setup, &fine, z0.clone(), &w, i)?
            };
            let mut diverged = reference.diverged_at.is_some();
            let mut errs = Vec::with_capacity(levels.len());
            for l in &levels {
                let p = simulate_with_noise(setup, l, z0.clone(), &w, i)?;
                diverged |= p.diverged_at.is_some() || p.len() != l.n_steps()? + 1;
                errs.push((p.final_state() - reference.final_state()).norm_squared());
            }
            Ok((errs, diverged))
        })
        .collect();
    let mut per_level = vec![Vec::new(); levels.len()];
    let mut n_diverged = 0;
    for r in results {
        let (errs, diverged) = r?;
        if diverged {
            n_diverged += 1;
            continue;
        }
        for (k, e) in errs.into_iter().enumerate() {
            per_level[k].push(e);
        }
    }
    let (errors, std_errors): (Vec<f64>, Vec<f64>) = per_level.iter().map(|sq| rms_with_stderr(sq)).unzip();
    Ok(TimeConvergenceReport {
        dt_ladder: dt_ladder.to_vec(),
        slope: fitted_slope(dt_ladder, &errors),
        strong_errors: errors,
        std_errors,
        reference: if exact { ReferenceKind::Exact } else { ReferenceKind::FineStep },
        n_paths,
        n_diverged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPath {
    pub path_index: u64,
    /// `sup_t ‖Z(x0) − Z(x0′)‖²`
    pub sup_gap_sq: f64,
    /// `‖x0 − x0′‖²` after projection.
    pub initial_gap_sq: f64,
    /// `exp(∫ (g + φ(Z) + ψ(Z′)) dt)`
    pub gronwall_factor: f64,
    pub ratio: f64,
    pub nonincreasing: bool,
    pub bitwise_identical: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub paths: Vec<StabilityPath>,
    pub tolerance: f64,
}

impl StabilityReport {
    pub fn all_identical(&self) -> bool {
        self.paths.iter().all(|p| p.bitwise_identical)
    }

    pub fn all_nonincreasing(&self) -> bool {
        self.paths.iter().all(|p| p.nonincreasing)
    }

    /// Share of paths with `ratio ≤ 1 + tolerance`.
    pub fn fraction_within(&self) -> f64 {
        let ok = self.paths.iter().filter(|p| p.ratio <= 1.0 + self.tolerance).count();
        ok as f64 / self.paths.len().max(1) as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "path_index",
            "sup_gap_sq",
            "initial_gap_sq",
            "gronwall_factor",
            "ratio",
            "nonincreasing",
            "bitwise_identical",
            "diverged",
        ])?;
        for p in &self.paths {
            w.write_record([
                p.path_index.to_string(),
                fmt(p.sup_gap_sq),
                fmt(p.initial_gap_sq),
                fmt(p.gronwall_factor),
                fmt(p.ratio),
                u8::from(p.nonincreasing).to_string(),
                u8::from(p.bitwise_identical).to_string(),
                u8::from(p.diverged).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pointwise one-sided Lipschitz weight of drift plus noise at the pair
/// `(u, v)`: `2φ₃ + Σβ_i·L(p1)·(‖u‖∞^{p1−2} + ‖v‖∞^{p1−2})`.
fn monotonicity_weight(setup: &Setup, t: f64, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let c = &setup.coeffs;
    let lip_h = 2.0 * c.lipschitz.phi3_at(t);
    let noise = &c.noise;
    if noise.is_zero() {
        return lip_h;
    }
    let sb = noise.sum_beta();
    let p1 = noise.p1;
    let sigma2 = if p1 == 2.0 {
        sb
    } else {
        let nu = setup.space.linf_norm(&setup.space.synthesize(u));
        let nv = setup.space.linf_norm(&setup.space.synthesize(v));
        sb * crate::coefficients::lipschitz_ratio(p1) * (nu.powf(p1 - 2.0) + nv.powf(p1 - 2.0))
    };
    lip_h + sigma2
}

/// Paired ensembles from `x0` and `x0_perturbed` on identical Brownian paths.
pub fn pathwise_stability_study(
    setup: &Setup,
    config: &SolverConfig,
    x0: &DVector<f64>,
    x0_perturbed: &DVector<f64>,
    n_paths: usize,
    tolerance: f64,
) -> Result<StabilityReport> {
    config.validate(setup)?;
    let results: Vec<Result<StabilityPath>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let a = simulate_path(setup, config, x0, i)?;
            let b = simulate_path(setup, config, x0_perturbed, i)?;
            let len = a.len().min(b.len());
            let gaps: Vec<f64> = (0..len).map(|k| (&a.states[k] - &b.states[k]).norm_squared()).collect();
            let weight = trapezoid(&a.times[..len], |k| monotonicity_weight(setup, a.times[k], &a.states[k], &b.states[k]));
            let factor = weight.exp();
            let sup = gaps.iter().copied().fold(0.0, f64::max);
            let initial = gaps[0];
            let ratio = if initial > 0.0 {
                sup / (initial * factor)
            } else if sup == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(StabilityPath {
                path_index: i,
                sup_gap_sq: sup,
                initial_gap_sq: initial,
                gronwall_factor: factor,
                ratio,
                nonincreasing: gaps.windows(2).all(|w| w[1] <= w[0]),
                bitwise_identical: a == b,
                diverged: a.diverged_at.is_some() || b.diverged_at.is_some(),
            })
        })
        .collect();
    Ok(StabilityReport { paths: results.into_iter().collect::<Result<_>>()?, tolerance })
}
