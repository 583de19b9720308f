//! Polynomial root finding: companion-matrix eigenvalues with a Newton polish
//! for real roots, plus a safeguarded Newton iteration for scalar equations.

use nalgebra::{Complex, DMatrix};

/// All roots of the real polynomial `c[0] + c[1] x + ... + c[n] x^n`.
///
/// Roots come from the eigenvalues of the companion matrix; real roots are
/// polished with two Newton steps, which brings the well-conditioned cubics
/// and quartics used here to machine precision.
pub fn roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    // strip trailing (leading-power) zeros
    let mut n = coeffs.len();
    while n > 1 && coeffs[n - 1] == 0.0 {
        n -= 1;
    }
    let c = &coeffs[..n];
    let deg = n - 1;
    if deg == 0 {
        return vec![];
    }
    if deg == 1 {
        return vec![Complex::new(-c[0] / c[1], 0.0)];
    }
    if deg == 2 {
        let (a, b, cc) = (c[2], c[1], c[0]);
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            // numerically stable pairing
            let q = -0.5 * (b + b.signum() * s);
            let r1 = if q != 0.0 { cc / q } else { 0.0 };
            let r2 = if a != 0.0 { q / a } else { 0.0 };
            return vec![Complex::new(r1, 0.0), Complex::new(r2, 0.0)];
        }
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a);
        return vec![Complex::new(re, im), Complex::new(re, -im)];
    }
    if deg == 3 {
        let mut rs = cubic_roots(c[2] / c[3], c[1] / c[3], c[0] / c[3]);
        for r in &mut rs {
            if r.im == 0.0 {
                r.re = newton_polish(c, r.re);
            }
        }
        return rs;
    }
    let lead = c[deg];
    let mut companion = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -c[i] / lead;
    }
    let schur = nalgebra::linalg::Schur::try_new(companion, 1e-14, 10_000)
        .expect("companion matrix Schur iteration failed");
    let eig = schur.complex_eigenvalues();
    let mut out: Vec<Complex<f64>> = eig.iter().copied().collect();
    for r in &mut out {
        if r.im.abs() < 1e-9 * (1.0 + r.re.abs()) {
            let polished = newton_polish(c, r.re);
            *r = Complex::new(polished, 0.0);
        }
    }
    out
}

/// Roots of the monic cubic `x^3 + a2 x^2 + a1 x + a0` by the closed form
/// (depressed cubic with the trigonometric/Cardano branches). Robust for the
/// repeated- and zero-root cases where QR iteration on a companion matrix can
/// stall.
fn cubic_roots(a2: f64, a1: f64, a0: f64) -> Vec<Complex<f64>> {
    let shift = a2 / 3.0;
    let p = a1 - a2 * a2 / 3.0;
    let q = 2.0 * a2.powi(3) / 27.0 - a2 * a1 / 3.0 + a0;
    let scale = p.abs().max(q.abs().cbrt()).max(1e-300);
    if p.abs() < 1e-14 * scale * scale && q.abs() < 1e-14 * scale.powi(3) {
        // triple root
        return vec![Complex::new(-shift, 0.0); 3];
    }
    let disc = 0.25 * q * q + p.powi(3) / 27.0;
    if disc > 0.0 {
        // one real root, one complex pair
        let s = disc.sqrt();
        let u = (-0.5 * q + s).cbrt();
        let v = (-0.5 * q - s).cbrt();
        let real = u + v - shift;
        let re = -0.5 * (u + v) - shift;
        let im = 0.5 * 3.0_f64.sqrt() * (u - v);
        vec![
            Complex::new(real, 0.0),
            Complex::new(re, im),
            Complex::new(re, -im),
        ]
    } else {
        // three real roots (trigonometric form); disc == 0 gives a double
        let m = 2.0 * (-p / 3.0).max(0.0).sqrt();
        let arg = if m > 0.0 {
            (3.0 * q / (p * m)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| {
                let angle = theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                Complex::new(m * angle.cos() - shift, 0.0)
            })
            .collect()
    }
}

fn eval_and_derivative(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &ck in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + ck;
    }
    (p, dp)
}

fn newton_polish(c: &[f64], mut x: f64) -> f64 {
    for _ in 0..3 {
        let (p, dp) = eval_and_derivative(c, x);
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        x -= step;
        if step.abs() <= 1e-16 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// The root with the largest real part. Ties within `1e-9` prefer a real root.
pub fn largest_real_part_root(coeffs: &[f64]) -> Complex<f64> {
    let rs = roots(coeffs);
    assert!(!rs.is_empty(), "constant polynomial has no roots");
    let max_re = rs.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * (1.0 + max_re.abs());
    rs.iter()
        .filter(|r| r.re >= max_re - tol)
        .max_by(|a, b| {
            // real beats complex, then larger real part
            let ra = (a.im == 0.0) as u8;
            let rb = (b.im == 0.0) as u8;
            ra.cmp(&rb).then(a.re.total_cmp(&b.re))
        })
        .copied()
        .unwrap()
}

/// Safeguarded Newton iteration: Newton steps restricted to a bracket
/// `[lo, hi]` with `f(lo) <= 0 <= f(hi)` (or reversed); bisects whenever the
/// Newton step leaves the bracket or stalls.
pub fn safeguarded_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    x0: f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> f64 {
    let flo = f(lo);
    let mut x = x0.clamp(lo.min(hi), lo.max(hi));
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (flo < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d != 0.0 {
            x - fx / d
        } else {
            0.5 * (lo + hi)
        };
        if !(next > lo.min(hi) && next < lo.max(hi)) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= tol * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}
