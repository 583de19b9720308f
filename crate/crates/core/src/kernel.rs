//! The angular collision kernel `B(n . omega, |w - w*|) = |w - w*|^gamma b(n . omega)`:
//! its scalar invariants, scattering-direction sampling and the quadrature
//! oracle for the tensor identity behind the moment equations.
//!
//! Only the homogeneity `gamma = 0` (Maxwell molecules) feeds the analytic
//! layer; `gamma != 0` kernels drive simulator probes only.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::quad::integrate_adaptive;

/// Relative tolerance for the kernel's scalar invariants.
const INVARIANT_REL_TOL: f64 = 1e-10;
/// Nodes in the inverse-CDF sampling table.
const CDF_TABLE_NODES: usize = 1024;

type AngularFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Angular part of the collision kernel together with its homogeneity.
///
/// The angular part must be continuous, bounded and nonnegative on `[-1, 1]`;
/// kernels with atoms are rejected at construction (the moment theory breaks
/// down for Dirac masses). Scalar invariants and the sampling table are built
/// once and cached; the kernel is immutable afterwards and safe to share
/// across threads.
#[derive(Clone)]
pub struct AngularKernel {
    angular: AngularFn,
    gamma: f64,
    name: String,
    b: f64,
    lambda0: f64,
    /// quantile table for cos(theta) sampling: `cdf[i]` at equispaced x-nodes
    cdf: Vec<f64>,
    /// interior kink locations of the angular part (tabulated kernels);
    /// polar quadrature panels split here so each panel sees a smooth piece
    breakpoints: Vec<f64>,
}

impl std::fmt::Debug for AngularKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngularKernel")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("b", &self.b)
            .field("lambda0", &self.lambda0)
            .finish()
    }
}

impl AngularKernel {
    /// Isotropic kernel `b(x) = 1/(4 pi)`: unit total rate, `b = 1/5`.
    pub fn isotropic() -> Self {
        Self::from_fn(|_| 0.25 / std::f64::consts::PI, 0.0, "isotropic")
            .expect("isotropic kernel is valid")
    }

    /// Quadratic kernel `b(x) = x^2`.
    pub fn quadratic() -> Self {
        Self::from_fn(|x| x * x, 0.0, "quadratic").expect("quadratic kernel is valid")
    }

    /// Kernel tabulated at equispaced nodes on `[-1, 1]`, linearly interpolated.
    pub fn custom(values: &[f64], gamma: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(CoreError::InvalidKernel(
                "custom kernel needs at least 2 nodes".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::InvalidKernel(
                "custom kernel values must be finite and nonnegative".into(),
            ));
        }
        let vals: Vec<f64> = values.to_vec();
        let n_nodes = vals.len();
        let f = move |x: f64| -> f64 {
            let n = vals.len();
            let u = (x.clamp(-1.0, 1.0) + 1.0) / 2.0 * (n - 1) as f64;
            let i = (u.floor() as usize).min(n - 2);
            let frac = u - i as f64;
            vals[i] * (1.0 - frac) + vals[i + 1] * frac
        };
        let mut kernel = Self::from_fn(f, gamma, "custom")?;
        kernel.breakpoints = (1..n_nodes - 1)
            .map(|i| -1.0 + 2.0 * i as f64 / (n_nodes - 1) as f64)
            .collect();
        Ok(kernel)
    }

    /// Kernel from an arbitrary angular function.
    ///
    /// Nonnegativity and boundedness are checked on a fine grid; this cannot
    /// rule out pathologies between grid points, but the presets and any
    /// continuous user function are covered.
    pub fn from_fn(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: f64,
        name: &str,
    ) -> Result<Self> {
        let angular: AngularFn = Arc::new(f);
        for i in 0..=4096 {
            let x = -1.0 + 2.0 * i as f64 / 4096.0;
            let v = angular(x);
            if !v.is_finite() {
                return Err(CoreError::InvalidKernel(format!(
                    "angular part not finite at x = {x}"
                )));
            }
            if v < 0.0 {
                return Err(CoreError::InvalidKernel(format!(
                    "angular part negative at x = {x}: {v}"
                )));
            }
        }
        let b = compute_b_of(&*angular)?;
        let lambda0 = compute_lambda0_of(&*angular)?;
        let cdf = build_cdf_table(&*angular);
        Ok(AngularKernel {
            angular,
            gamma,
            name: name.to_string(),
            b,
            lambda0,
            cdf,
            breakpoints: Vec::new(),
        })
    }

    /// Looks up a preset by name ("isotropic", "quadratic").
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "isotropic" => Ok(Self::isotropic()),
            "quadratic" => Ok(Self::quadratic()),
            other => Err(CoreError::InvalidKernel(format!(
                "unknown kernel preset '{other}' (expected isotropic, quadratic or custom)"
            ))),
        }
    }

    pub fn angular(&self, x: f64) -> f64 {
        (self.angular)(x)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Collision strength `b = 3 pi int b(x) x^2 (1 - x^2) dx` (cached).
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Total angular rate `Lambda_0 = 2 pi int b(x) dx` (cached).
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Scalar invariants as a pair, with the sanity bound checked.
    pub fn constants(&self) -> KernelConstants {
        KernelConstants {
            b: self.b,
            lambda0: self.lambda0,
        }
    }

    /// Draws `cos(theta)` from the marginal density proportional to `b(x)`.
    pub fn sample_cos(&self, rng: &mut impl Rng) -> Result<f64> {
        if self.lambda0 <= 0.0 {
            return Err(CoreError::ZeroKernel);
        }
        let u: f64 = rng.random();
        // binary search the cumulative table, linear interpolation inside
        let idx = self.cdf.partition_point(|c| *c < u).min(self.cdf.len() - 1);
        let i = idx.max(1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let x0 = node_x(i - 1, self.cdf.len());
        let x1 = node_x(i, self.cdf.len());
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        Ok((x0 + frac * (x1 - x0)).clamp(-1.0, 1.0))
    }

    /// Samples a scattering direction `omega` with density proportional to
    /// `b(n . omega)` on the sphere: `cos(theta)` from the inverse-CDF table,
    /// azimuth uniform around `n`.
    pub fn sample_omega(&self, n: &Vector3<f64>, rng: &mut impl Rng) -> Result<Vector3<f64>> {
        debug_assert!(
            (n.norm() - 1.0).abs() < 1e-12,
            "scattering axis must be a unit vector"
        );
        let c = self.sample_cos(rng)?;
        let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let s = (1.0 - c * c).max(0.0).sqrt();
        let (t1, t2) = crate::quad::orthonormal_frame(n);
        Ok(n * c + (t1 * phi.cos() + t2 * phi.sin()) * s)
    }

    /// Numerically integrated tensor
    /// `Z(v) = int_{S^2} b(omega . v/|v|) [P_perp v (x) P v] domega`,
    /// the quadrature oracle for the closed form `b [v (x) v - |v|^2 I / 3]`.
    ///
    /// Angular-part only (the `gamma = 0` branch). `v = 0` returns the zero
    /// form, the continuous limit.
    pub fn z_tensor_quadrature(&self, v: &Vector3<f64>) -> Matrix3<f64> {
        let vn = v.norm();
        if vn == 0.0 {
            return Matrix3::zeros();
        }
        let pole = v / vn;
        let mut z = Matrix3::zeros();
        let (t1, t2) = crate::quad::orthonormal_frame(&pole);
        let phi_nodes: Vec<f64> = (0..128)
            .map(|k| 2.0 * std::f64::consts::PI * k as f64 / 128.0)
            .collect();
        let (cos_nodes, cos_weights) = self.polar_rule();
        let wphi = 2.0 * std::f64::consts::PI / phi_nodes.len() as f64;
        for (c, wc) in cos_nodes.iter().zip(&cos_weights) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            let bval = self.angular(*c);
            if bval == 0.0 {
                continue;
            }
            for phi in &phi_nodes {
                let omega = pole * *c + (t1 * phi.cos() + t2 * phi.sin()) * s;
                let p_par = omega * (omega.dot(v));
                let p_perp = v - p_par;
                z += (p_perp * p_par.transpose()) * (bval * wc * wphi);
            }
        }
        z
    }
}

impl AngularKernel {
    /// Polar quadrature nodes and weights on `[-1, 1]`: a single 64-point
    /// Gauss-Legendre rule for smooth angular parts, or a composite rule with
    /// panels split at the tabulated kernel's kinks (16 points per panel).
    fn polar_rule(&self) -> (Vec<f64>, Vec<f64>) {
        if self.breakpoints.is_empty() {
            return crate::quad::gauss_legendre(64);
        }
        let mut edges = Vec::with_capacity(self.breakpoints.len() + 2);
        edges.push(-1.0);
        edges.extend_from_slice(&self.breakpoints);
        edges.push(1.0);
        let (base_nodes, base_weights) = crate::quad::gauss_legendre(16);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in base_nodes.iter().zip(&base_weights) {
                nodes.push(mid + half * x);
                weights.push(w * half);
            }
        }
        (nodes, weights)
    }
}

/// Closed form `b [v (x) v - |v|^2 I / 3]` that the quadrature must reproduce.
pub fn z_tensor_closed_form(b: f64, v: &Vector3<f64>) -> Matrix3<f64> {
    (v * v.transpose() - Matrix3::identity() * (v.norm_squared() / 3.0)) * b
}

/// Scalar invariants of a kernel.
///
/// Bound chain: `b = 3 pi int b(x) x^2(1-x^2) dx <= 3 pi max[x^2(1-x^2)] int b(x) dx
/// = (3/8) Lambda_0`, and `Lambda_0 > 0` whenever the angular part is not
/// identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub b: f64,
    pub lambda0: f64,
}

impl KernelConstants {
    /// `b <= (3/8) Lambda_0` up to quadrature roundoff.
    pub fn satisfies_bound_chain(&self) -> bool {
        self.b <= 0.375 * self.lambda0 * (1.0 + 1e-12) + 1e-300
    }
}

/// `b = 3 pi int_{-1}^{1} b(x) x^2 (1 - x^2) dx` by adaptive quadrature,
/// relative tolerance 1e-10.
pub fn compute_b(kernel: &AngularKernel) -> Result<f64> {
    compute_b_of(&*kernel.angular)
}

/// `Lambda_0 = 2 pi int_{-1}^{1} b(x) dx` by adaptive quadrature.
pub fn compute_lambda0(kernel: &AngularKernel) -> Result<f64> {
    compute_lambda0_of(&*kernel.angular)
}

fn compute_b_of(angular: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Result<f64> {
    let f = |x: f64| angular(x) * x * x * (1.0 - x * x);
    let v = integrate_adaptive(&f, -1.0, 1.0, INVARIANT_REL_TOL)?;
    Ok(3.0 * std::f64::consts::PI * v)
}

fn compute_lambda0_of(angular: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Result<f64> {
    let v = integrate_adaptive(&|x| angular(x), -1.0, 1.0, INVARIANT_REL_TOL)?;
    Ok(2.0 * std::f64::consts::PI * v)
}

fn node_x(i: usize, n: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / (n - 1) as f64
}

fn build_cdf_table(angular: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Vec<f64> {
    // cumulative trapezoid of the angular part over equispaced nodes
    let n = CDF_TABLE_NODES;
    let h = 2.0 / (n - 1) as f64;
    let mut cdf = vec![0.0; n];
    let mut prev = angular(-1.0);
    for i in 1..n {
        let cur = angular(node_x(i, n));
        cdf[i] = cdf[i - 1] + 0.5 * h * (prev + cur);
        prev = cur;
    }
    let total = cdf[n - 1];
    if total > 0.0 {
        for c in cdf.iter_mut() {
            *c /= total;
        }
    }
    cdf[n - 1] = 1.0;
    cdf
}
