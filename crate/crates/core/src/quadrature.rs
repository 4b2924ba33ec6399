//! Quadrature for the Gagliardo double integral of piecewise-linear functions
//! extended by zero.
//!
//! The integral over `ℝ × ℝ` splits into
//!
//! * element self-pairs, where the integrand reduces to `|slope|^p·|x−y|^{p(1−s)−1}`
//!   and is integrated in closed form;
//! * pairs sharing a node, handled by a Duffy split of the square into two
//!   triangles, which leaves a smooth one-dimensional integral;
//! * separated pairs, by tensor Gauss rules whose kernel weights depend only
//!   on the element offset on a uniform mesh;
//! * the exterior tail `2∫_O |v(x)|^p ∫_{Oᶜ} |x−y|^{−1−ps} dy dx`, where the
//!   inner integral is analytic over the truncated exterior and the endpoint
//!   singularity of the boundary elements is integrated in closed form.

use nalgebra::{DMatrix, DVector};

use crate::domain::FracOperatorParams;
use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSpace, Mesh};
use crate::special::gauss_legendre_unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSettings {
    /// Gauss points per panel.
    pub panel_rule: usize,
    /// Panels used near the singular diagonal and the domain endpoints.
    pub near_diag_split: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { panel_rule: 8, near_diag_split: 6 }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if self.panel_rule < 2 {
            return Err(Error::param("panel_rule must be >= 2"));
        }
        if self.near_diag_split < 2 {
            return Err(Error::param("near_diag_split must be >= 2"));
        }
        Ok(())
    }

    /// Both parameters multiplied by `factor` (used for refinement studies).
    pub fn refined(&self, factor: usize) -> Self {
        Self { panel_rule: self.panel_rule * factor, near_diag_split: self.near_diag_split * factor }
    }
}

/// Composite Gauss rule on `[0, 1]`.
#[derive(Debug, Clone)]
struct LocalRule {
    xi: Vec<f64>,
    w: Vec<f64>,
}

impl LocalRule {
    fn composite(points: usize, panels: usize) -> Self {
        let (x, w) = gauss_legendre_unit(points);
        let mut xi = Vec::with_capacity(points * panels);
        let mut ww = Vec::with_capacity(points * panels);
        let width = 1.0 / panels as f64;
        for k in 0..panels {
            for (x, w) in x.iter().zip(&w) {
                xi.push((k as f64 + x) * width);
                ww.push(w * width);
            }
        }
        Self { xi, w: ww }
    }
}

/// Tensor rule and kernel table for element pairs at a fixed offset `d ≥ 2`.
#[derive(Debug, Clone)]
struct OffsetTable {
    rule: usize,
    /// `K[a·n + b] = w_a w_b h² |x_a − y_b|^{−1−ps}`.
    kernel: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FracQuadrature {
    params: FracOperatorParams,
    mesh: Mesh,
    truncation: f64,
    settings: QuadratureSettings,
    integer_p: Option<i32>,
    self_coef: f64,
    touch_scale: f64,
    touch_t: Vec<f64>,
    touch_w: Vec<f64>,
    rules: Vec<LocalRule>,
    offsets: Vec<Option<OffsetTable>>,
    ext_rule: LocalRule,
    /// Per element: `h·w_a·tail(x_a)` at the exterior rule nodes.
    ext_weights: Vec<Vec<f64>>,
    ext_sing: f64,
}

#[inline]
fn abs_pow(z: f64, p: f64, ip: Option<i32>) -> f64 {
    match ip {
        Some(2) => z * z,
        Some(k) => z.abs().powi(k),
        None => z.abs().powf(p),
    }
}

/// `|z|^{p−2} z`
#[inline]
fn signed_pow(z: f64, p: f64, ip: Option<i32>) -> f64 {
    match ip {
        Some(2) => z,
        Some(k) => z.abs().powi(k - 2) * z,
        None => z.abs().powf(p - 2.0) * z,
    }
}

impl FracQuadrature {
    pub fn new(space: &GalerkinSpace, params: &FracOperatorParams, settings: QuadratureSettings) -> Result<Self> {
        settings.validate()?;
        if params.n != 1 {
            return Err(Error::Unsupported(format!(
                "quadrature is implemented for n = 1 only (got n = {})",
                params.n
            )));
        }
        let mesh = *space.mesh();
        let h = mesh.h;
        let (p, s) = (params.p, params.s);
        let ps = p * s;
        let integer_p = if p.fract() == 0.0 && p <= 64.0 { Some(p as i32) } else { None };

        let alpha = p * (1.0 - s) - 1.0;
        let self_coef = 2.0 * h.powf(alpha + 2.0) / ((alpha + 1.0) * (alpha + 2.0));

        let beta = p * (1.0 - s) + 1.0;
        let touch_scale = h.powf(beta) / beta;
        let touch_rule = LocalRule::composite(settings.panel_rule, settings.near_diag_split);
        let touch_w = touch_rule
            .xi
            .iter()
            .zip(&touch_rule.w)
            .map(|(t, w)| w * (1.0 + t).powf(-1.0 - ps))
            .collect();

        let n_el = mesh.n_elements();
        let mut rules: Vec<LocalRule> = Vec::new();
        let mut rule_panels: Vec<usize> = Vec::new();
        let mut offsets = vec![None, None];
        for d in 2..n_el {
            let panels = (2 * settings.near_diag_split).div_ceil(d).max(1);
            let rule = match rule_panels.iter().position(|&k| k == panels) {
                Some(i) => i,
                None => {
                    rules.push(LocalRule::composite(settings.panel_rule, panels));
                    rule_panels.push(panels);
                    rules.len() - 1
                }
            };
            let r = &rules[rule];
            let n = r.xi.len();
            let mut kernel = Vec::with_capacity(n * n);
            for a in 0..n {
                for b in 0..n {
                    let dist = h * (d as f64 + r.xi[b] - r.xi[a]);
                    kernel.push(r.w[a] * r.w[b] * h * h * dist.powf(-1.0 - ps));
                }
            }
            offsets.push(Some(OffsetTable { rule, kernel }));
        }

        let truncation = space.domain().exterior_truncation;
        let ext_rule = LocalRule::composite(settings.panel_rule, settings.near_diag_split);
        let (a, b) = (mesh.a, mesh.b);
        let tail = |dist: f64| -> f64 {
            // ∫ over the exterior interval of length `truncation` starting at distance `dist`
            (dist.powf(-ps) - (dist + truncation).powf(-ps)) / ps
        };
        let mut ext_weights = Vec::with_capacity(n_el);
        for e in 0..n_el {
            let x0 = mesh.node(e);
            let w: Vec<f64> = ext_rule
                .xi
                .iter()
                .zip(&ext_rule.w)
                .map(|(xi, w)| {
                    let x = x0 + xi * h;
                    let (dl, dr) = (x - a, b - x);
                    // own-endpoint singularities of the boundary elements are analytic
                    let left = if e == 0 { -(dl + truncation).powf(-ps) / ps } else { tail(dl) };
                    let right = if e == n_el - 1 { -(dr + truncation).powf(-ps) / ps } else { tail(dr) };
                    w * h * (left + right)
                })
                .collect();
            ext_weights.push(w);
        }
        // ∫_0^h (x/h)^p x^{−ps}/(ps) dx
        let ext_sing = h.powf(1.0 - ps) / ((p - ps + 1.0) * ps);

        Ok(Self {
            params: *params,
            mesh,
            truncation,
            settings,
            integer_p,
            self_coef,
            touch_scale,
            touch_t: touch_rule.xi,
            touch_w,
            rules,
            offsets,
            ext_rule,
            ext_weights,
            ext_sing,
        })
    }

    pub fn params(&self) -> &FracOperatorParams {
        &self.params
    }

    pub fn settings(&self) -> QuadratureSettings {
        self.settings
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// State error unless this quadrature was built for `space` and `params`.
    pub fn check_consistent(&self, space: &GalerkinSpace, params: &FracOperatorParams) -> Result<()> {
        if *space.mesh() != self.mesh || space.domain().exterior_truncation != self.truncation {
            return Err(Error::State("quadrature was assembled for a different mesh".into()));
        }
        if *params != self.params {
            return Err(Error::State("quadrature was assembled for different operator parameters".into()));
        }
        Ok(())
    }

    fn check_len(&self, v: &DVector<f64>) {
        assert_eq!(v.len(), self.mesh.m, "nodal vector length must equal the number of interior nodes");
    }

    fn slopes(&self, v: &DVector<f64>) -> Vec<f64> {
        (0..self.mesh.n_elements())
            .map(|e| {
                let (l, r) = self.mesh.element_values(v, e);
                (r - l) / self.mesh.h
            })
            .collect()
    }

    fn rule_values(&self, v: &DVector<f64>, rule: &LocalRule) -> Vec<Vec<f64>> {
        (0..self.mesh.n_elements())
            .map(|e| {
                let (l, r) = self.mesh.element_values(v, e);
                rule.xi.iter().map(|xi| l * (1.0 - xi) + r * xi).collect()
            })
            .collect()
    }

    /// `[v]^p` with the zero-extension exterior contribution.
    pub fn seminorm_pow(&self, v: &DVector<f64>) -> f64 {
        self.check_len(v);
        let (p, ip) = (self.params.p, self.integer_p);
        let n_el = self.mesh.n_elements();
        let sl = self.slopes(v);

        let self_part: f64 = sl.iter().map(|&s| self.self_coef * abs_pow(s, p, ip)).sum();

        let mut touch = 0.0;
        for e in 0..n_el.saturating_sub(1) {
            let (si, sj) = (sl[e], sl[e + 1]);
            let acc: f64 = self
                .touch_t
                .iter()
                .zip(&self.touch_w)
                .map(|(t, w)| w * (abs_pow(si + sj * t, p, ip) + abs_pow(si * t + sj, p, ip)))
                .sum();
            touch += self.touch_scale * acc;
        }

        let values: Vec<Vec<Vec<f64>>> = self.rules.iter().map(|r| self.rule_values(v, r)).collect();
        let mut far = 0.0;
        for (d, table) in self.offsets.iter().enumerate() {
            let Some(table) = table else { continue };
            let vals = &values[table.rule];
            let n = vals[0].len();
            for e in 0..n_el - d {
                let (vx, vy) = (&vals[e], &vals[e + d]);
                let mut acc = 0.0;
                for a in 0..n {
                    let row = &table.kernel[a * n..(a + 1) * n];
                    for b in 0..n {
                        acc += row[b] * abs_pow(vx[a] - vy[b], p, ip);
                    }
                }
                far += acc;
            }
        }

        self_part + 2.0 * (touch + far) + 2.0 * self.exterior(v, |x| abs_pow(x, p, ip))
    }

    /// `∫_O g(v(x))·tail(x) dx` with the closed-form endpoint terms.
    fn exterior(&self, v: &DVector<f64>, g: impl Fn(f64) -> f64) -> f64 {
        let m = self.mesh.m;
        let mut acc = 0.0;
        for (e, w) in self.ext_weights.iter().enumerate() {
            let (l, r) = self.mesh.element_values(v, e);
            acc += self.ext_rule.xi.iter().zip(w).map(|(xi, w)| w * g(l * (1.0 - xi) + r * xi)).sum::<f64>();
        }
        acc + self.ext_sing * (g(v[0]) + g(v[m - 1]))
    }

    /// `[v]_{W^{s,p}}`
    pub fn seminorm(&self, v: &DVector<f64>) -> f64 {
        self.seminorm_pow(v).max(0.0).powf(1.0 / self.params.p)
    }

    /// `∬ |dv|^{p−2} dv du / |x−y|^{n+ps}` including exterior tails, where
    /// `dv = v(x) − v(y)`.
    pub fn weak_sum(&self, v: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.check_len(v);
        self.check_len(u);
        let (p, ip) = (self.params.p, self.integer_p);
        let n_el = self.mesh.n_elements();
        let sv = self.slopes(v);
        let su = self.slopes(u);

        let self_part: f64 = sv.iter().zip(&su).map(|(a, b)| self.self_coef * signed_pow(*a, p, ip) * b).sum();

        let mut touch = 0.0;
        for e in 0..n_el.saturating_sub(1) {
            let (vi, vj, ui, uj) = (sv[e], sv[e + 1], su[e], su[e + 1]);
            let acc: f64 = self
                .touch_t
                .iter()
                .zip(&self.touch_w)
                .map(|(t, w)| {
                    w * (signed_pow(vi + vj * t, p, ip) * (ui + uj * t)
                        + signed_pow(vi * t + vj, p, ip) * (ui * t + uj))
                })
                .sum();
            touch += self.touch_scale * acc;
        }

        let mut far = 0.0;
        for (d, table) in self.offsets.iter().enumerate() {
            let Some(table) = table else { continue };
            let rule = &self.rules[table.rule];
            let vals_v = self.rule_values(v, rule);
            let vals_u = self.rule_values(u, rule);
            let n = rule.xi.len();
            for e in 0..n_el - d {
                let mut acc = 0.0;
                for a in 0..n {
                    let row = &table.kernel[a * n..(a + 1) * n];
                    for b in 0..n {
                        let dv = vals_v[e][a] - vals_v[e + d][b];
                        let du = vals_u[e][a] - vals_u[e + d][b];
                        acc += row[b] * signed_pow(dv, p, ip) * du;
                    }
                }
                far += acc;
            }
        }

        // exterior: |v|^{p−2} v u
        let m = self.mesh.m;
        let mut ext = 0.0;
        for (e, w) in self.ext_weights.iter().enumerate() {
            let (lv, rv) = self.mesh.element_values(v, e);
            let (lu, ru) = self.mesh.element_values(u, e);
            for (xi, w) in self.ext_rule.xi.iter().zip(w) {
                let vx = lv * (1.0 - xi) + rv * xi;
                let ux = lu * (1.0 - xi) + ru * xi;
                ext += w * signed_pow(vx, p, ip) * ux;
            }
        }
        ext += self.ext_sing * (signed_pow(v[0], p, ip) * u[0] + signed_pow(v[m - 1], p, ip) * u[m - 1]);

        self_part + 2.0 * (touch + far) + 2.0 * ext
    }

    /// Gradient of `u ↦ weak_sum(v, u)`: entry `j` is `weak_sum(v, φ_j)`.
    pub fn weak_dual(&self, v: &DVector<f64>) -> DVector<f64> {
        self.check_len(v);
        let (p, ip) = (self.params.p, self.integer_p);
        let m = self.mesh.m;
        let h = self.mesh.h;
        let n_el = self.mesh.n_elements();
        let sv = self.slopes(v);
        // accumulate with boundary slots 0 and m+1 that are dropped at the end
        let mut g = vec![0.0; m + 2];
        // slope of u on element e is (u_{e+1} − u_e)/h
        let add_slope = |g: &mut Vec<f64>, e: usize, coef: f64| {
            g[e + 1] += coef / h;
            g[e] -= coef / h;
        };

        for e in 0..n_el {
            add_slope(&mut g, e, self.self_coef * signed_pow(sv[e], p, ip));
        }

        for e in 0..n_el.saturating_sub(1) {
            let (vi, vj) = (sv[e], sv[e + 1]);
            let (mut ci, mut cj) = (0.0, 0.0);
            for (t, w) in self.touch_t.iter().zip(&self.touch_w) {
                let f1 = signed_pow(vi + vj * t, p, ip);
                let f2 = signed_pow(vi * t + vj, p, ip);
                ci += w * (f1 + f2 * t);
                cj += w * (f1 * t + f2);
            }
            add_slope(&mut g, e, 2.0 * self.touch_scale * ci);
            add_slope(&mut g, e + 1, 2.0 * self.touch_scale * cj);
        }

        for (d, table) in self.offsets.iter().enumerate() {
            let Some(table) = table else { continue };
            let rule = &self.rules[table.rule];
            let vals = self.rule_values(v, rule);
            let n = rule.xi.len();
            let mut gx = vec![0.0; n];
            let mut gy = vec![0.0; n];
            for e in 0..n_el - d {
                gx.iter_mut().for_each(|x| *x = 0.0);
                gy.iter_mut().for_each(|x| *x = 0.0);
                for a in 0..n {
                    let row = &table.kernel[a * n..(a + 1) * n];
                    for b in 0..n {
                        let f = row[b] * signed_pow(vals[e][a] - vals[e + d][b], p, ip);
                        gx[a] += f;
                        gy[b] += f;
                    }
                }
                let j = e + d;
                for a in 0..n {
                    let xi = rule.xi[a];
                    g[e] += 2.0 * gx[a] * (1.0 - xi);
                    g[e + 1] += 2.0 * gx[a] * xi;
                    g[j] -= 2.0 * gy[a] * (1.0 - xi);
                    g[j + 1] -= 2.0 * gy[a] * xi;
                }
            }
        }

        for (e, w) in self.ext_weights.iter().enumerate() {
            let (l, r) = self.mesh.element_values(v, e);
            for (xi, w) in self.ext_rule.xi.iter().zip(w) {
                let f = 2.0 * w * signed_pow(l * (1.0 - xi) + r * xi, p, ip);
                g[e] += f * (1.0 - xi);
                g[e + 1] += f * xi;
            }
        }
        g[1] += 2.0 * self.ext_sing * signed_pow(v[0], p, ip);
        g[m] += 2.0 * self.ext_sing * signed_pow(v[m - 1], p, ip);

        DVector::from_column_slice(&g[1..=m])
    }

    /// `(A₁v, u) = −½·C·weak_sum(v, u)`.
    pub fn weak_form(&self, v: &DVector<f64>, u: &DVector<f64>) -> f64 {
        -0.5 * self.params.c_kernel * self.weak_sum(v, u)
    }

    /// Dual vector `(A₁v, φ_j)`.
    pub fn dual_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        self.weak_dual(v) * (-0.5 * self.params.c_kernel)
    }

    /// Fractional stiffness matrix for p = 2: `vᵀSv = ½·C·[v]²` and
    /// `(A₁v, u) = −uᵀSv`.
    pub fn assemble_stiffness(&self) -> Result<DMatrix<f64>> {
        if self.params.p != 2.0 {
            return Err(Error::Unsupported(format!(
                "stiffness assembly requires p = 2 (got p = {})",
                self.params.p
            )));
        }
        let m = self.mesh.m;
        let half_c = 0.5 * self.params.c_kernel;
        let mut s = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            let col = self.weak_dual(&e) * half_c;
            s.set_column(j, &col);
        }
        Ok((&s + s.transpose()) * 0.5)
    }

    /// Upper bound on the exterior mass discarded by truncating the tail
    /// integral: `4·T^{−ps}/(ps)·‖v‖^p_{L^p}`.
    pub fn truncation_error_bound(&self, space: &GalerkinSpace, v: &DVector<f64>) -> f64 {
        let ps = self.params.p * self.params.s;
        4.0 * self.truncation.powf(-ps) / ps * space.lp_norm_pow(v, self.params.p)
    }
}
