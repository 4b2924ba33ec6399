//! Special functions and quadrature rules used across the crate.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation (g = 7, nine terms) with
/// reflection for arguments below one half.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x)Γ(1−x) = π / sin(πx)
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (k, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + k as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    (nodes, weights)
}

/// `Σ_{i ≥ start} i^{−r}` for `r > 1`, using an Euler–Maclaurin tail past the
/// first few explicit terms.
pub fn power_tail(r: f64, start: usize) -> f64 {
    assert!(r > 1.0, "power series diverges for r <= 1");
    let start = start.max(1);
    let switch = start.max(32);
    let mut sum: f64 = (start..switch).map(|i| (i as f64).powf(-r)).sum();
    let n = switch as f64;
    let f = n.powf(-r);
    sum += n.powf(1.0 - r) / (r - 1.0) + 0.5 * f + r * f / (12.0 * n)
        - r * (r + 1.0) * (r + 2.0) * f / (720.0 * n.powi(3))
        + r * (r + 1.0) * (r + 2.0) * (r + 3.0) * (r + 4.0) * f / (30_240.0 * n.powi(5));
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_half_integers() {
        // reference values: mpmath, 25 digits
        let table = [
            (0.5, 1.772_453_850_905_516_027_298_167),
            (1.5, 0.886_226_925_452_758_013_649_083_7),
            (2.5, 1.329_340_388_179_137_020_473_626),
            (3.5, 3.323_350_970_447_842_551_184_064),
            (0.1, 9.513_507_698_668_731_285_807_98),
            (0.9, 1.068_628_702_119_319_336_984_154),
            (4.2, 7.756_689_535_793_179_445_542_525),
            (7.3, 1_271.423_633_663_908_839_917_874),
            (12.7, 225_322_480.241_418_485_596_293_1),
        ];
        for (x, g) in table {
            assert!(rel(gamma(x), g) < 1e-13, "Γ({x}) = {} vs {g}", gamma(x));
        }
        assert!(rel(gamma(1.0), 1.0) < 1e-14);
        assert!(rel(gamma(6.0), 120.0) < 1e-13);
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre_unit(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let exact = 1.0 / (deg as f64 + 1.0);
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((got - exact).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn power_tail_matches_zeta() {
        // ζ(2) = π²/6, ζ(4) = π⁴/90
        assert!(rel(power_tail(2.0, 1), PI * PI / 6.0) < 1e-13);
        assert!(rel(power_tail(4.0, 1), PI.powi(4) / 90.0) < 1e-13);
        let direct: f64 = (5..200_000).map(|i| (i as f64).powf(-3.0)).sum::<f64>();
        let tail = power_tail(3.0, 200_000);
        assert!(rel(power_tail(3.0, 5), direct + tail) < 1e-12);
    }
}
