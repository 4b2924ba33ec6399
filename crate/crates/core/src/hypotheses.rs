//! Parameter algebra of the abstract hypotheses and the admissibility
//! conditions of the three concrete existence theorems.

use std::fmt::Write as _;

use crate::coefficients::{DriftSpec, SuperlinearNoiseSpec, TransportNoiseSpec};
use crate::domain::{kernel_constant, FracOperatorParams, PoincareEstimate, PoincareKind};
use crate::error::{Error, Result};

/// The parameter vector of the local monotonicity, coercivity, growth and
/// diffusion-growth hypotheses for `J` operator components.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisParams {
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    /// `∫₀ᵀ |g(t)| dt`
    pub g_l1_norm: f64,
}

impl HypothesisParams {
    /// All components with `θ = α = β = γ₂ = 0`, `γ₁ = 1`.
    pub fn trivial(q: Vec<f64>) -> Self {
        let j = q.len();
        Self {
            q,
            theta: vec![0.0; j],
            alpha: 0.0,
            alpha1: 0.0,
            alpha2: 0.0,
            beta1: vec![0.0; j],
            beta2: vec![0.0; j],
            gamma1: vec![1.0; j],
            gamma2: vec![0.0; j],
            g_l1_norm: 0.0,
        }
    }

    pub fn j(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.j();
        if j == 0 {
            return Err(Error::dim("at least one operator component is required"));
        }
        for (name, v) in [
            ("theta", &self.theta),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("gamma1", &self.gamma1),
            ("gamma2", &self.gamma2),
        ] {
            if v.len() != j {
                return Err(Error::dim(format!("{name} has {} entries, expected {j}", v.len())));
            }
        }
        for i in 0..j {
            if !(self.q[i] > 1.0) {
                return Err(Error::param(format!("q_{} = {} must exceed 1", i + 1, self.q[i])));
            }
            if !(self.theta[i] >= 0.0 && self.theta[i] < self.q[i]) {
                return Err(Error::param(format!("theta_{} = {} must lie in [0, q_{})", i + 1, self.theta[i], i + 1)));
            }
            if !(self.gamma1[i] > 0.0) {
                return Err(Error::param(format!("gamma1_{} = {} must be > 0", i + 1, self.gamma1[i])));
            }
            for (name, v) in [("beta1", self.beta1[i]), ("beta2", self.beta2[i]), ("gamma2", self.gamma2[i])] {
                if !(v >= 0.0) {
                    return Err(Error::param(format!("{name}_{} = {v} must be >= 0", i + 1)));
                }
            }
        }
        for (name, v) in [("alpha", self.alpha), ("alpha1", self.alpha1), ("alpha2", self.alpha2), ("g_l1_norm", self.g_l1_norm)]
        {
            if !(v >= 0.0) {
                return Err(Error::param(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }

    /// `min_j γ_{1,j}/γ_{2,j}` with `γ_{2,j} = 0` read as `+∞`.
    pub fn min_gamma_ratio(&self) -> f64 {
        self.gamma1
            .iter()
            .zip(&self.gamma2)
            .map(|(g1, g2)| if *g2 == 0.0 { f64::INFINITY } else { g1 / g2 })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `κ_j = max{1+β_{1,j}, 1+α, 1+β_{2,j}+2θ_j/q_j}`
pub fn compute_kappa(params: &HypothesisParams) -> Vec<f64> {
    (0..params.j())
        .map(|j| {
            (1.0 + params.beta1[j])
                .max(1.0 + params.alpha)
                .max((params.q[j] + 2.0 * params.theta[j]) / params.q[j] + params.beta2[j])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck {
    pub ok: bool,
    pub max_kappa: f64,
    /// `2·min_j γ_{1,j}/γ_{2,j}`
    pub bound: f64,
    pub margin: f64,
}

/// `max_j κ_j < 2·min_j(γ_{1,j}/γ_{2,j})`
pub fn check_gap(params: &HypothesisParams) -> GapCheck {
    let max_kappa = compute_kappa(params).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let bound = 2.0 * params.min_gamma_ratio();
    GapCheck { ok: max_kappa < bound, max_kappa, bound, margin: bound - max_kappa }
}

/// `p_max = ½ + min_j γ_{1,j}/γ_{2,j}`; moments of order `p ∈ [1, p_max)`
/// are controlled.
pub fn moment_exponent_range(params: &HypothesisParams) -> f64 {
    0.5 + params.min_gamma_ratio()
}

/// One named inequality `lhs < rhs` or `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
}

impl Inequality {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, strict: bool) -> Self {
        Self { name: name.into(), lhs, rhs, strict }
    }

    pub fn holds(&self) -> bool {
        if self.strict {
            self.lhs < self.rhs
        } else {
            self.lhs <= self.rhs
        }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    /// Margin relative to `|rhs|` (absolute when `rhs = 0`).
    pub fn relative_margin(&self) -> f64 {
        if self.rhs == 0.0 {
            self.margin()
        } else {
            self.margin() / self.rhs.abs()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremCheck {
    pub theorem: u8,
    pub inequalities: Vec<Inequality>,
    /// Set when a condition depends on the estimated Poincaré constant.
    pub conditional_on_lambda: Option<PoincareKind>,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.inequalities.iter().all(Inequality::holds)
    }

    pub fn violated(&self) -> impl Iterator<Item = &Inequality> {
        self.inequalities.iter().filter(|i| !i.holds())
    }
}

/// Monotone drift in the weaker setting: `Σβ_i < λC(n,p,s)/6` and `sp > n`.
pub fn check_theorem_1(
    op: &FracOperatorParams,
    noise: &SuperlinearNoiseSpec,
    lambda: &PoincareEstimate,
) -> TheoremCheck {
    let sum_beta = noise.sum_beta();
    TheoremCheck {
        theorem: 1,
        inequalities: vec![
            Inequality::new("sum beta_i < lambda*C(n,p,s)/6", sum_beta, lambda.lambda * op.c_kernel / 6.0, true),
            Inequality::new("embedding s*p > n", f64::from(op.n), op.s * op.p, true),
            Inequality::new("2 <= p1", 2.0, noise.p1, false),
            Inequality::new("p1 <= p", noise.p1, op.p, false),
        ],
        conditional_on_lambda: Some(lambda.kind),
    }
}

fn theorem_2_inequalities(drift: &DriftSpec, noise: &SuperlinearNoiseSpec) -> Vec<Inequality> {
    vec![
        Inequality::new("2 <= p1", 2.0, noise.p1, false),
        Inequality::new("p1 < q", noise.p1, drift.q, true),
        Inequality::new("sum beta_i < delta1", noise.sum_beta(), drift.delta1, true),
        Inequality::new("sum gamma_i <= 2*delta3", noise.sum_gamma(), 2.0 * drift.delta3, false),
    ]
}

/// Strongly monotone drift: `2 ≤ p₁ < q`, `Σβ_i < δ₁`, `Σγ_i ≤ 2δ₃`.
pub fn check_theorem_2(drift: &DriftSpec, noise: &SuperlinearNoiseSpec) -> TheoremCheck {
    TheoremCheck { theorem: 2, inequalities: theorem_2_inequalities(drift, noise), conditional_on_lambda: None }
}

/// The strongly monotone conditions plus `δ₄ < C(n,2,s)` and `δ₅ ≤ ½C(n,2,s)`.
pub fn check_theorem_3(
    drift: &DriftSpec,
    noise: &SuperlinearNoiseSpec,
    transport: &TransportNoiseSpec,
    op: &FracOperatorParams,
) -> Result<TheoremCheck> {
    if op.p != 2.0 {
        return Err(Error::Unsupported(format!("transport noise requires p = 2 (got p = {})", op.p)));
    }
    let c2 = kernel_constant(op.n, 2.0, op.s)?;
    let mut inequalities = theorem_2_inequalities(drift, noise);
    inequalities.push(Inequality::new("delta4 < C(n,2,s)", transport.delta4, c2, true));
    inequalities.push(Inequality::new("delta5 <= C(n,2,s)/2", transport.delta5, 0.5 * c2, false));
    Ok(TheoremCheck { theorem: 3, inequalities, conditional_on_lambda: None })
}

fn three_components(op: &FracOperatorParams, drift: &DriftSpec) -> HypothesisParams {
    let mut params = HypothesisParams::trivial(vec![op.p, drift.q, 2.0]);
    params.gamma1 = vec![0.5 * op.c_kernel, drift.delta1.max(f64::MIN_POSITIVE), 1.0];
    params
}

/// Parameters for the weakly monotone setting: `θ₁ = p − 2`,
/// `γ₂ = (2Σβ/λ, 0, 0)`.
pub fn theorem_1_params(op: &FracOperatorParams, drift: &DriftSpec, noise: &SuperlinearNoiseSpec, lambda: f64) -> HypothesisParams {
    let mut params = three_components(op, drift);
    params.theta[0] = op.p - 2.0;
    params.gamma2[0] = 2.0 * noise.sum_beta() / lambda;
    params
}

/// Parameters for the strongly monotone setting: `γ₂ = (0, 2Σβ, 0)`.
pub fn theorem_2_params(op: &FracOperatorParams, drift: &DriftSpec, noise: &SuperlinearNoiseSpec) -> HypothesisParams {
    let mut params = three_components(op, drift);
    params.gamma2[1] = 2.0 * noise.sum_beta();
    params
}

/// As for the strongly monotone setting with `γ_{2,1} = δ₄`.
pub fn theorem_3_params(
    op: &FracOperatorParams,
    drift: &DriftSpec,
    noise: &SuperlinearNoiseSpec,
    transport: &TransportNoiseSpec,
) -> HypothesisParams {
    let mut params = theorem_2_params(op, drift, noise);
    params.gamma2[0] = transport.delta4;
    params
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub theorem: u8,
    pub params: HypothesisParams,
    pub kappa: Vec<f64>,
    pub gap: GapCheck,
    pub p_max: f64,
    pub theorem_checks: Vec<TheoremCheck>,
    pub notes: Vec<String>,
}

impl AdmissibilityReport {
    pub fn new(theorem: u8, params: HypothesisParams, check: TheoremCheck, mut notes: Vec<String>) -> Result<Self> {
        params.validate()?;
        let kappa = compute_kappa(&params);
        let gap = check_gap(&params);
        let p_max = moment_exponent_range(&params);
        if params.gamma2.iter().any(|&g| g == 0.0) {
            notes.push("gamma2_j = 0 is read as gamma1_j/gamma2_j = +inf".into());
        }
        if let Some(kind) = check.conditional_on_lambda {
            notes.push(format!(
                "conditions involving lambda use the discrete Poincare estimate ({})",
                match kind {
                    PoincareKind::Certified => "certified on the discrete space",
                    PoincareKind::Heuristic => "heuristic",
                }
            ));
        }
        if p_max <= 1.0 {
            notes.push("moment range [1, p_max) is empty".into());
        }
        Ok(Self { theorem, params, kappa, gap, p_max, theorem_checks: vec![check], notes })
    }

    pub fn passed(&self) -> bool {
        self.gap.ok && self.theorem_checks.iter().all(TheoremCheck::passed)
    }

    /// Names of every violated inequality, including the gap condition.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .theorem_checks
            .iter()
            .flat_map(|c| c.violated().map(|i| i.name.clone()).collect::<Vec<_>>())
            .collect();
        if !self.gap.ok {
            out.push("gap max kappa_j < 2*min gamma1_j/gamma2_j".into());
        }
        out
    }

    /// Human-readable report followed by a `key = value` block.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "admissibility report (theorem {})", self.theorem);
        let _ = writeln!(s, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        for check in &self.theorem_checks {
            for ineq in &check.inequalities {
                let rel = if ineq.strict { "<" } else { "<=" };
                let _ = writeln!(
                    s,
                    "  [{}] {}: {} {} {} (margin {})",
                    if ineq.holds() { "ok" } else { "VIOLATED" },
                    ineq.name,
                    fmt_num(ineq.lhs),
                    rel,
                    fmt_num(ineq.rhs),
                    fmt_num(ineq.margin())
                );
            }
        }
        let _ = writeln!(
            s,
            "  [{}] gap: max kappa = {} < {} (margin {})",
            if self.gap.ok { "ok" } else { "VIOLATED" },
            fmt_num(self.gap.max_kappa),
            fmt_num(self.gap.bound),
            fmt_num(self.gap.margin)
        );
        let kappa: Vec<String> = self.kappa.iter().map(|k| fmt_num(*k)).collect();
        let _ = writeln!(s, "kappa: {}", kappa.join(", "));
        let _ = writeln!(s, "moment exponents: 1 <= p < {}", fmt_num(self.p_max));
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "theorem = {}", self.theorem);
        let _ = writeln!(s, "pass = {}", self.passed());
        let _ = writeln!(s, "gap_ok = {}", self.gap.ok);
        let _ = writeln!(s, "gap_margin = {}", fmt_num(self.gap.margin));
        let _ = writeln!(s, "p_max = {}", fmt_num(self.p_max));
        for (j, k) in self.kappa.iter().enumerate() {
            let _ = writeln!(s, "kappa_{} = {}", j + 1, fmt_num(*k));
        }
        for check in &self.theorem_checks {
            for (i, ineq) in check.inequalities.iter().enumerate() {
                let _ = writeln!(s, "condition_{} = {} ; {}", i + 1, ineq.holds(), ineq.name);
                let _ = writeln!(s, "condition_{}_margin = {}", i + 1, fmt_num(ineq.margin()));
            }
        }
        s
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{lipschitz_ratio, PowerSequence, Sigma1Spec};
    use proptest::prelude::*;

    fn noise(p1: f64, sum_beta_target: f64, gamma_scale: f64) -> SuperlinearNoiseSpec {
        // β_i = b₀ on i ≤ 4
        let b0 = sum_beta_target / 4.0;
        SuperlinearNoiseSpec::new(
            p1,
            PowerSequence::new(b0, 0.0, Some(4)).unwrap(),
            PowerSequence::new(gamma_scale * lipschitz_ratio(p1) * b0, 0.0, Some(4)).unwrap(),
            Sigma1Spec::None,
        )
        .unwrap()
    }

    #[test]
    fn kappa_examples() {
        let p = HypothesisParams::trivial(vec![2.0, 3.0]);
        assert_eq!(compute_kappa(&p), vec![1.0, 1.0]);
        let mut a = HypothesisParams::trivial(vec![2.0]);
        a.alpha = 2.0;
        assert_eq!(compute_kappa(&a), vec![3.0]);
        for pp in [2.0, 2.5, 3.0, 4.0, 10.0] {
            let op = FracOperatorParams::new(1, pp, 0.6).unwrap();
            let drift = DriftSpec::power(4.0, 1.0).unwrap();
            let params = theorem_1_params(&op, &drift, &noise(2.0, 0.1, 1.0), 1.0);
            let k = compute_kappa(&params);
            assert_eq!(k[0], 3.0 - 4.0 / pp);
            assert_eq!(&k[1..], &[1.0, 1.0]);
        }
    }

    #[test]
    fn gap_examples() {
        let p = HypothesisParams::trivial(vec![2.0, 2.0, 2.0]);
        let g = check_gap(&p);
        assert!(g.ok && g.margin == f64::INFINITY);
        let mut p2 = p.clone();
        p2.gamma2 = vec![1.0, 0.0, 0.0];
        let g = check_gap(&p2);
        assert!(g.ok);
        assert_eq!(g.margin, 1.0);
    }

    #[test]
    fn gap_reduces_to_weak_setting_formula() {
        let op = FracOperatorParams::new(1, 3.0, 0.6).unwrap();
        let drift = DriftSpec::power(4.0, 1.0).unwrap();
        for (lambda, sb) in [(5.0, 0.2), (5.0, 2.0), (1.0, 0.9), (0.3, 3.0)] {
            let params = theorem_1_params(&op, &drift, &noise(2.0, sb, 1.0), lambda);
            let expect = 1.0 / op.p > 0.75 - lambda * op.c_kernel / (8.0 * sb);
            assert_eq!(check_gap(&params).ok, expect);
        }
    }

    #[test]
    fn moment_range_examples() {
        let mut p = HypothesisParams::trivial(vec![2.0, 2.0, 2.0]);
        assert_eq!(moment_exponent_range(&p), f64::INFINITY);
        p.gamma2 = vec![2.0, 0.0, 0.0];
        assert_eq!(moment_exponent_range(&p), 1.0);
        p.gamma1 = vec![5.0, 1.0, 1.0];
        assert_eq!(moment_exponent_range(&p), 3.0);
    }

    #[test]
    fn theorem_1_checks() {
        let op = FracOperatorParams::new(1, 3.0, 0.6).unwrap();
        let lam = PoincareEstimate { lambda: 4.0, kind: PoincareKind::Heuristic };
        let bound = lam.lambda * op.c_kernel / 6.0;
        assert!(check_theorem_1(&op, &SuperlinearNoiseSpec::zero(), &lam).passed());
        let c = check_theorem_1(&op, &noise(2.0, 0.9 * bound, 1.0), &lam);
        assert!(c.passed());
        assert!((c.inequalities[0].relative_margin() - 0.1).abs() < 1e-12);
        let weak = FracOperatorParams::new(1, 2.0, 0.4).unwrap();
        let c = check_theorem_1(&weak, &SuperlinearNoiseSpec::zero(), &lam);
        assert_eq!(c.violated().next().unwrap().name, "embedding s*p > n");
    }

    #[test]
    fn theorem_2_boundaries() {
        let drift = DriftSpec::power(4.0, 1.0).unwrap();
        assert!(!check_theorem_2(&drift, &noise(2.0, 1.0, 1.0)).passed());
        // Σγ = 2δ₃ exactly with Σβ well inside
        let p1 = 2.0;
        let k = lipschitz_ratio(p1);
        let sb = 0.5;
        let b0 = sb / 4.0;
        let g0 = 2.0 * drift.delta3 / 4.0;
        assert!(g0 >= k * b0);
        let n = SuperlinearNoiseSpec::new(
            p1,
            PowerSequence::new(b0, 0.0, Some(4)).unwrap(),
            PowerSequence::new(g0, 0.0, Some(4)).unwrap(),
            Sigma1Spec::None,
        )
        .unwrap();
        assert_eq!(n.sum_gamma(), 2.0 * drift.delta3);
        assert!(check_theorem_2(&drift, &n).passed());
        let eq = DriftSpec::power(3.0, 1.0).unwrap();
        let c = check_theorem_2(&eq, &noise(3.0, 0.1, 1.0));
        assert_eq!(c.violated().next().unwrap().name, "p1 < q");
    }

    #[test]
    fn theorem_3_boundaries() {
        let op = FracOperatorParams::new(1, 2.0, 0.5).unwrap();
        let drift = DriftSpec::power(4.0, 1.0).unwrap();
        let nz = noise(2.0, 0.5, 1.0);
        let c2 = op.c_kernel;
        let mut t = TransportNoiseSpec::none();
        t.delta4 = c2;
        t.delta5 = 0.25 * c2;
        let c = check_theorem_3(&drift, &nz, &t, &op).unwrap();
        assert_eq!(c.violated().map(|i| i.name.as_str()).collect::<Vec<_>>(), vec!["delta4 < C(n,2,s)"]);
        t.delta4 = 0.5 * c2;
        t.delta5 = 0.5 * c2;
        assert!(check_theorem_3(&drift, &nz, &t, &op).unwrap().passed());
        let p3 = FracOperatorParams::new(1, 3.0, 0.5).unwrap();
        assert!(check_theorem_3(&drift, &nz, &t, &p3).is_err());
    }

    #[test]
    fn report_is_deterministic_and_names_failures() {
        let op = FracOperatorParams::new(1, 2.0, 0.5).unwrap();
        let drift = DriftSpec::power(4.0, 1.0).unwrap();
        let nz = noise(2.0, 1.0, 1.0);
        let build = || {
            AdmissibilityReport::new(2, theorem_2_params(&op, &drift, &nz), check_theorem_2(&drift, &nz), vec![]).unwrap()
        };
        let (a, b) = (build(), build());
        assert_eq!(a.render(), b.render());
        assert!(!a.passed());
        assert!(a.render().contains("VIOLATED] sum beta_i < delta1"));
        // in this setting the gap condition is equivalent to the strict β bound
        assert_eq!(a.violations(), vec!["sum beta_i < delta1".to_string(), "gap max kappa_j < 2*min gamma1_j/gamma2_j".to_string()]);
    }

    fn arb_params() -> impl Strategy<Value = HypothesisParams> {
        (
            prop::collection::vec((1.1f64..6.0, 0.0f64..1.0, 0.0f64..2.0, 0.0f64..2.0, 0.1f64..3.0, 0.0f64..3.0), 1..4),
            0.0f64..2.0,
        )
            .prop_map(|(rows, alpha)| {
                let mut p = HypothesisParams::trivial(rows.iter().map(|r| r.0).collect());
                p.theta = rows.iter().map(|r| r.1 * r.0 * 0.99).collect();
                p.beta1 = rows.iter().map(|r| r.2).collect();
                p.beta2 = rows.iter().map(|r| r.3).collect();
                p.gamma1 = rows.iter().map(|r| r.4).collect();
                p.gamma2 = rows.iter().map(|r| r.5).collect();
                p.alpha = alpha;
                p
            })
    }

    proptest! {
        #[test]
        fn kappa_monotone(p in arb_params(), bump in 0.0f64..1.0, j in 0usize..4) {
            let j = j % p.j();
            let base = compute_kappa(&p);
            for field in 0..4 {
                let mut q = p.clone();
                match field {
                    0 => q.alpha += bump,
                    1 => q.beta1[j] += bump,
                    2 => q.beta2[j] += bump,
                    _ => q.theta[j] = (q.theta[j] + bump).min(q.q[j] * 0.999).max(q.theta[j]),
                }
                let k = compute_kappa(&q);
                for (a, b) in base.iter().zip(&k) {
                    prop_assert!(b >= a);
                }
            }
        }

        #[test]
        fn gap_monotone(p in arb_params(), bump in 0.0f64..2.0, j in 0usize..4) {
            let j = j % p.j();
            let base = check_gap(&p).ok;
            let mut up = p.clone();
            up.gamma1[j] += bump;
            if base { prop_assert!(check_gap(&up).ok); }
            let mut down = p.clone();
            down.gamma2[j] += bump;
            if !base { prop_assert!(!check_gap(&down).ok); }
            let mut k = p.clone();
            k.alpha += bump;
            if !base { prop_assert!(!check_gap(&k).ok); }
        }

        #[test]
        fn p_max_at_least_one_when_gap_ok(p in arb_params()) {
            if check_gap(&p).ok {
                prop_assert!(moment_exponent_range(&p) >= 1.0);
            }
        }
    }
}
