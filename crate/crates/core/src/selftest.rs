//! Fast property checks runnable from the installed binary.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{
    check_adjoint_identity, DriftSpec, PowerSequence, Sigma1Spec, SuperlinearNoiseSpec, TransportNoiseSpec,
    TransportOperator,
};
use crate::domain::{kernel_constant, DomainSpec, FracOperatorParams};
use crate::galerkin::build_space;
use crate::harness::slobodeckij;
use crate::hypotheses::{check_theorem_2, compute_kappa, theorem_1_params};
use crate::operator::check_scalar_monotonicity;
use crate::quadrature::{FracQuadrature, QuadratureSettings};
use crate::rng::BrownianIncrements;
use crate::setup::{Coefficients, Setup};
use crate::solver::{simulate_path, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> crate::Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
    }
}

fn random_vec(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("kernel_constant", || {
            let err = (kernel_constant(1, 2.0, 0.5)? - 1.0 / PI).abs();
            Ok((err < 1e-12, format!("|C(1,2,1/2) - 1/pi| = {err:e}")))
        }),
        check("kappa_theorem_1", || {
            let noise = SuperlinearNoiseSpec::zero();
            let mut worst = 0.0f64;
            for p in [2.0, 2.5, 3.0, 4.0, 10.0] {
                let op = FracOperatorParams::new(1, p, 0.9)?;
                let k = compute_kappa(&theorem_1_params(&op, &DriftSpec::power(p, 1.0)?, &noise, 1.0));
                worst = worst.max((k[0] - (3.0 - 4.0 / p)).abs()).max((k[1] - 1.0).abs()).max((k[2] - 1.0).abs());
            }
            Ok((worst == 0.0, format!("max deviation {worst:e}")))
        }),
        check("scalar_monotonicity", || {
            let mut total = 0;
            for p in [2.0, 3.0, 4.0, 6.0] {
                total += check_scalar_monotonicity(p, 10_000, 1)?.violations;
            }
            Ok((total == 0, format!("{total} violations in 40000 pairs")))
        }),
        check("coercivity_identity", || {
            let space = build_space(DomainSpec::default(), 16, 8)?;
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut worst = 0.0f64;
            for p in [2.0, 3.0] {
                let params = FracOperatorParams::new(1, p, 0.5)?;
                let quad = FracQuadrature::new(&space, &params, QuadratureSettings::default())?;
                let v = random_vec(&mut rng, 16);
                let lhs = quad.weak_form(&v, &v);
                let rhs = -0.5 * params.c_kernel * quad.seminorm_pow(&v);
                worst = worst.max(((lhs - rhs) / rhs).abs());
            }
            Ok((worst < 1e-8, format!("max relative error {worst:e}")))
        }),
        check("transport_adjoint", || {
            let space = build_space(DomainSpec::default(), 24, 8)?;
            let params = FracOperatorParams::new(1, 2.0, 0.5)?;
            let quad = FracQuadrature::new(&space, &params, QuadratureSettings::default())?;
            let s = quad.assemble_stiffness()?;
            let spec = TransportNoiseSpec::sine_family(space.mesh(), 0.3, 1.0, 2, params.c_kernel)?;
            let op = TransportOperator::new(&space, &s, &spec)?;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let (u, v) = (random_vec(&mut rng, 24), random_vec(&mut rng, 24));
            let scale = space.l2_norm(&op.sqrt_laplacian(&u)) * space.l2_norm(&v);
            let res = check_adjoint_identity(&space, &op, &u, &v) / scale;
            Ok((res < 1e-6, format!("relative residual {res:e}")))
        }),
        check("hypothesis_boundaries", || {
            let drift = DriftSpec::power(4.0, 1.0)?;
            let beta = PowerSequence::new(1.0, 2.0, Some(1))?;
            let at_beta = SuperlinearNoiseSpec::new(2.0, beta, beta, Sigma1Spec::None)?;
            let gamma_edge = SuperlinearNoiseSpec::new(
                2.0,
                PowerSequence::new(0.5, 2.0, Some(1))?,
                PowerSequence::new(1.0, 2.0, Some(1))?,
                Sigma1Spec::None,
            )?;
            let beta_fails = !check_theorem_2(&drift, &at_beta).passed();
            let gamma_passes = check_theorem_2(&drift, &gamma_edge).passed();
            Ok((beta_fails && gamma_passes, format!("beta boundary fails: {beta_fails}, gamma boundary passes: {gamma_passes}")))
        }),
        check("slobodeckij_linear_path", || {
            let n = 1000;
            let times: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
            let states: Vec<DVector<f64>> = times.iter().map(|&t| DVector::from_element(1, t)).collect();
            let got = slobodeckij(&times, &states, 0.25)?.seminorm_sq;
            let err = (got - 8.0 / 15.0).abs();
            Ok((err < 1e-3, format!("|seminorm^2 - 8/15| = {err:e}")))
        }),
        check("brownian_reproducible", || {
            let a = BrownianIncrements::generate(5, 3, 64, 1.0 / 64.0)?;
            let b = BrownianIncrements::generate(5, 3, 64, 1.0 / 64.0)?;
            Ok((a == b, "identical seeds give identical increments".into()))
        }),
        check("solver_zero_fixed_point", || {
            let params = FracOperatorParams::new(1, 2.0, 0.5)?;
            let setup = Setup::new(params, DomainSpec::default(), 8, 4, QuadratureSettings::default(), Coefficients::zero())?;
            let cfg = SolverConfig { t_end: 0.125, dt: 1.0 / 64.0, n_modes: 4, n_noise: 2, ..Default::default() };
            let path = simulate_path(&setup, &cfg, &DVector::zeros(8), 0)?;
            let max = path.states.iter().map(|z| z.amax()).fold(0.0, f64::max);
            Ok((max == 0.0, format!("max |Z| = {max:e}")))
        }),
    ]
}
