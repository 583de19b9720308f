//! Quadrature rules: Gauss-Legendre nodes, adaptive 1-D integration and a
//! product rule on the unit sphere.
//!
//! The sphere rule pairs Gauss-Legendre in `cos(theta)` with a uniform
//! (trapezoidal) azimuthal grid; the azimuthal integrands appearing here are
//! trigonometric polynomials of low degree, for which the uniform rule is
//! exact.

use nalgebra::Vector3;
use std::collections::HashMap;

use crate::error::{CoreError, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are computed by Newton iteration on the Legendre recurrence; for the
/// orders used in this crate (n <= 64) every node converges to machine
/// precision in a handful of iterations.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive Gauss-Legendre integration of `f` over `[a, b]`.
///
/// Each interval is accepted when a single 15-node panel agrees with its two
/// half-panels; otherwise the halves are pushed back on the work stack. Fails
/// with the achieved tolerance if the interval budget is exhausted.
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(15);
    let whole = panel(f, a, b, &nodes, &weights);
    let scale = whole.abs().max(1e-300);
    let mut stack = vec![(a, b, whole)];
    let mut total = 0.0;
    let mut err_accepted = 0.0;
    let mut splits = 0usize;
    const MAX_SPLITS: usize = 20_000;
    while let Some((lo, hi, coarse)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel(f, lo, mid, &nodes, &weights);
        let right = panel(f, mid, hi, &nodes, &weights);
        let fine = left + right;
        let err = (fine - coarse).abs();
        // Local acceptance pro-rated by interval length.
        let budget = rel_tol * scale * ((hi - lo) / (b - a)).max(1e-12);
        if err <= budget || hi - lo < 1e-13 * (b - a).abs() {
            total += fine;
            err_accepted += err;
        } else {
            splits += 1;
            if splits > MAX_SPLITS {
                return Err(CoreError::QuadratureNonConvergence {
                    requested: rel_tol,
                    achieved: err / scale,
                });
            }
            stack.push((lo, mid, left));
            stack.push((mid, hi, right));
        }
    }
    let achieved = err_accepted / total.abs().max(1e-300);
    if achieved > rel_tol * 10.0 && total.abs() > 1e-290 {
        return Err(CoreError::QuadratureNonConvergence {
            requested: rel_tol,
            achieved,
        });
    }
    Ok(total)
}

/// Product quadrature rule over the unit sphere, `int_{S^2} f(omega) domega`.
///
/// `n_cos` Gauss-Legendre nodes in the polar cosine and `n_phi` equispaced
/// azimuthal nodes. The default rule (64 x 128) integrates the smooth
/// integrands of this crate to near machine precision.
#[derive(Debug, Clone)]
pub struct SphereRule {
    cos_nodes: Vec<f64>,
    cos_weights: Vec<f64>,
    phi_nodes: Vec<f64>,
    phi_weight: f64,
}

impl SphereRule {
    pub fn new(n_cos: usize, n_phi: usize) -> Self {
        let (cos_nodes, cos_weights) = gauss_legendre(n_cos);
        let phi_nodes = (0..n_phi)
            .map(|k| 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64)
            .collect();
        SphereRule {
            cos_nodes,
            cos_weights,
            phi_nodes,
            phi_weight: 2.0 * std::f64::consts::PI / n_phi as f64,
        }
    }

    /// The 64 x 128 rule used by the analytic layer.
    pub fn standard() -> Self {
        SphereRule::new(64, 128)
    }

    /// Integrates `f(omega, cos_theta)` with the pole aligned to `pole`
    /// (which must be a unit vector). `cos_theta = omega . pole`.
    pub fn integrate(
        &self,
        pole: &Vector3<f64>,
        mut f: impl FnMut(&Vector3<f64>, f64) -> f64,
    ) -> f64 {
        let (t1, t2) = orthonormal_frame(pole);
        let mut acc = 0.0;
        for (c, wc) in self.cos_nodes.iter().zip(&self.cos_weights) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            let mut ring = 0.0;
            for phi in &self.phi_nodes {
                let omega = pole * *c + (t1 * phi.cos() + t2 * phi.sin()) * s;
                ring += f(&omega, *c);
            }
            acc += wc * self.phi_weight * ring;
        }
        acc
    }
}

/// Two unit vectors completing `p` (unit) to a right-handed orthonormal frame.
pub fn orthonormal_frame(p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let alt = if p.x.abs() <= p.y.abs() && p.x.abs() <= p.z.abs() {
        Vector3::x()
    } else if p.y.abs() <= p.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = p.cross(&alt).normalize();
    let t2 = p.cross(&t1);
    (t1, t2)
}

/// Vertices of a subdivided icosahedron projected on the unit sphere.
///
/// Subdivision keeps all vertices of the coarser level, so grids are nested:
/// level 4 has 2562 vertices, level 5 has 10242.
pub fn icosphere(level: usize) -> Vec<Vector3<f64>> {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in &faces {
            let ab = mid(&mut verts, &mut midpoint, *a, *b);
            let bc = mid(&mut verts, &mut midpoint, *b, *c);
            let ca = mid(&mut verts, &mut midpoint, *c, *a);
            next.push([*a, ab, ca]);
            next.push([*b, bc, ab]);
            next.push([*c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    verts
}

fn mid(verts: &mut Vec<Vector3<f64>>, cache: &mut HashMap<(u32, u32), u32>, a: u32, b: u32) -> u32 {
    let key = if a < b { (a, b) } else { (b, a) };
    if let Some(&i) = cache.get(&key) {
        return i;
    }
    let v = (verts[a as usize] + verts[b as usize]).normalize();
    verts.push(v);
    let i = (verts.len() - 1) as u32;
    cache.insert(key, i);
    i
}
