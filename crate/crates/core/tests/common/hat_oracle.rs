//! Independent evaluation of `∬_{B×B} |v(x)−v(y)|^p / |x−y|^{1+ps}` for a
//! single hat function `v`, where `B = [a−T, b+T]` is the truncated box.
//!
//! Substituting `y = x + r` gives `2∫₀^{|B|} r^{−1−ps} I(r) dr` with
//! `I(r) = ∫ |v(x) − v(x+r)|^p dx` over `x, x+r ∈ B`. The inner integral is
//! exact (piecewise-linear integrand); the outer one uses Gauss panels split at
//! every kink of `I`, with the substitution `r = r₀ u^k` on the first panel.

fn gauss(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Golub–Welsch-free Newton iteration on Legendre polynomials, on [0,1]
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = 0.5 * (1.0 - x);
        ws[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

struct Hat {
    left: f64,
    mid: f64,
    right: f64,
}

impl Hat {
    fn eval(&self, x: f64) -> f64 {
        if x <= self.left || x >= self.right {
            0.0
        } else if x <= self.mid {
            (x - self.left) / (self.mid - self.left)
        } else {
            (self.right - x) / (self.right - self.mid)
        }
    }
}

/// `∫_{x0}^{x1} |ℓ(x)|^p dx` for linear `ℓ` given by its end values.
fn abs_pow_linear(x0: f64, x1: f64, l0: f64, l1: f64, p: f64) -> f64 {
    let len = x1 - x0;
    if len <= 0.0 {
        return 0.0;
    }
    let f = |z: f64| z.abs().powf(p) * z;
    if (l1 - l0).abs() < 1e-14 * (l0.abs() + l1.abs()).max(1e-300) {
        return len * l0.abs().powf(p);
    }
    len * (f(l1) - f(l0)) / ((p + 1.0) * (l1 - l0))
}

fn inner(hat: &Hat, lo: f64, hi: f64, r: f64, p: f64) -> f64 {
    let (x0, x1) = (lo, hi - r);
    if x1 <= x0 {
        return 0.0;
    }
    let mut cuts = vec![x0, x1];
    for node in [hat.left, hat.mid, hat.right] {
        for c in [node, node - r] {
            if c > x0 && c < x1 {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let diff = |x: f64| hat.eval(x) - hat.eval(x + r);
    cuts.windows(2).map(|w| abs_pow_linear(w[0], w[1], diff(w[0]), diff(w[1]), p)).sum()
}

/// Hat centred at `mid` with half-width `h`, box `[lo, hi]`.
pub fn hat_seminorm_pow(mid: f64, h: f64, lo: f64, hi: f64, p: f64, s: f64) -> f64 {
    let hat = Hat { left: mid - h, mid, right: mid + h };
    let ps = p * s;
    let total = hi - lo;
    let mut breaks = vec![0.0, h, 2.0 * h, total];
    for node in [hat.left, hat.mid, hat.right] {
        for c in [hi - node, node - lo] {
            if c > 0.0 && c < total {
                breaks.push(c);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let (gx, gw) = gauss(24);
    let f = |r: f64| r.powf(-1.0 - ps) * inner(&hat, lo, hi, r, p);
    let mut acc = 0.0;
    for (k, w) in breaks.windows(2).enumerate() {
        let (r0, r1) = (w[0], w[1]);
        if k == 0 {
            // r = r1·u^k with k chosen so the integrand is smooth in u
            let kexp = 4.0;
            for (u, wu) in gx.iter().zip(&gw) {
                let r = r1 * u.powf(kexp);
                acc += wu * f(r) * r1 * kexp * u.powf(kexp - 1.0);
            }
        } else {
            let panels = 16;
            let width = (r1 - r0) / panels as f64;
            for j in 0..panels {
                for (u, wu) in gx.iter().zip(&gw) {
                    acc += wu * width * f(r0 + (j as f64 + u) * width);
                }
            }
        }
    }
    2.0 * acc
}
