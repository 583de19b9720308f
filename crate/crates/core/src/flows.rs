//! Deformation flows `L(t) = (I + tA)^{-1} A`: long-time classification from
//! the real Jordan structure of `A`, exact particle drift maps and the
//! analytic density law.

use nalgebra::{Matrix3, Vector3};

use crate::error::{CoreError, Result};
use crate::matrix_max_norm;

/// Default relative threshold for eigenvalue clustering / multiplicity
/// decisions. The Jordan structure is discontinuous; callers with nearly
/// degenerate matrices should use [`classify_flow_with_tol`].
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-10;

/// A deformation matrix `A` generating the flow `L(t) = (I + tA)^{-1} A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMatrix {
    a: Matrix3<f64>,
}

impl FlowMatrix {
    pub fn new(a: Matrix3<f64>) -> Self {
        FlowMatrix { a }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.a
    }
}

impl From<Matrix3<f64>> for FlowMatrix {
    fn from(a: Matrix3<f64>) -> Self {
        FlowMatrix::new(a)
    }
}

/// The seven long-time families of `L(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowFamily {
    HomogeneousDilatation,
    CylindricalDilatation,
    CylindricalDilatationShear,
    PlanarShear,
    SimpleShear,
    SimpleShearDecayingDilatation,
    CombinedOrthogonalShear,
}

impl FlowFamily {
    pub fn name(&self) -> &'static str {
        match self {
            FlowFamily::HomogeneousDilatation => "homogeneous_dilatation",
            FlowFamily::CylindricalDilatation => "cylindrical_dilatation",
            FlowFamily::CylindricalDilatationShear => "cylindrical_dilatation_shear",
            FlowFamily::PlanarShear => "planar_shear",
            FlowFamily::SimpleShear => "simple_shear",
            FlowFamily::SimpleShearDecayingDilatation => "simple_shear_decaying_dilatation",
            FlowFamily::CombinedOrthogonalShear => "combined_orthogonal_shear",
        }
    }
}

/// Classification result: family, its shear parameters and the orthonormal
/// frame (columns) in which `L(t)` takes the family's normal form.
#[derive(Debug, Clone)]
pub struct FlowCase {
    pub family: FlowFamily,
    pub shear_params: Vec<f64>,
    pub basis: Matrix3<f64>,
}

impl FlowCase {
    /// The constant generator of the rescaled (self-similar) dynamics in the
    /// normal-form frame, when the family has one:
    ///
    /// * simple shear: `K e1 (x) e2` (the physical and rescaled generators
    ///   coincide);
    /// * planar shear, cylindrical and homogeneous dilatation: the constant
    ///   matrix driving the dynamics in logarithmic time.
    ///
    /// Families (vi) and (vii) have no constant-generator rescaled form.
    pub fn rescaled_generator(&self) -> Result<Matrix3<f64>> {
        let m = match self.family {
            FlowFamily::SimpleShear => {
                let k = self.shear_params[0];
                let mut m = Matrix3::zeros();
                m[(0, 1)] = k;
                m
            }
            FlowFamily::PlanarShear => {
                let k = self.shear_params[0];
                let mut m = Matrix3::zeros();
                m[(1, 2)] = k;
                m[(2, 2)] = 1.0;
                m
            }
            FlowFamily::CylindricalDilatation | FlowFamily::CylindricalDilatationShear => {
                let k = self.shear_params.first().copied().unwrap_or(0.0);
                let mut m = Matrix3::identity();
                m[(2, 2)] = 0.0;
                m[(0, 2)] = k;
                m
            }
            FlowFamily::HomogeneousDilatation => Matrix3::identity(),
            other => return Err(CoreError::NoRescaledForm(other.name().to_string())),
        };
        Ok(m)
    }

    /// Asymptotic normal form of `L(t)` at time `t` (the leading terms of the
    /// family, without the `O(1/t^2)` corrections).
    pub fn normal_form_l(&self, t: f64) -> Matrix3<f64> {
        let p = &self.shear_params;
        match self.family {
            FlowFamily::HomogeneousDilatation => Matrix3::identity() / t,
            FlowFamily::CylindricalDilatation | FlowFamily::CylindricalDilatationShear => {
                let k = p.first().copied().unwrap_or(0.0);
                let mut m = Matrix3::identity();
                m[(2, 2)] = 0.0;
                m[(0, 2)] = k;
                m / t
            }
            FlowFamily::PlanarShear => {
                let mut m = Matrix3::zeros();
                m[(1, 2)] = p[0];
                m[(2, 2)] = 1.0;
                m / t
            }
            FlowFamily::SimpleShear => {
                let mut m = Matrix3::zeros();
                m[(0, 1)] = p[0];
                m
            }
            FlowFamily::SimpleShearDecayingDilatation => {
                let (k1, k2, k3) = (p[0], p[1], p[2]);
                let mut m = Matrix3::zeros();
                m[(0, 1)] = k2;
                let mut d = Matrix3::zeros();
                d[(0, 1)] = k1 * k3;
                d[(0, 2)] = k1;
                d[(2, 1)] = k3;
                d[(2, 2)] = 1.0;
                m + d / t
            }
            FlowFamily::CombinedOrthogonalShear => {
                let (k1, k2, k3) = (p[0], p[1], p[2]);
                let mut m = Matrix3::zeros();
                m[(0, 1)] = k3;
                m[(0, 2)] = k2 - t * k1 * k3;
                m[(1, 2)] = k1;
                m
            }
        }
    }
}

/// Canonical deformation matrices realizing each family's normal form.
pub mod canonical {
    use super::*;

    /// `A = K e1 (x) e2` (nilpotent, `L(t) = A` for all t).
    pub fn simple_shear(k: f64) -> Matrix3<f64> {
        let mut a = Matrix3::zeros();
        a[(0, 1)] = k;
        a
    }

    /// Idempotent planar-shear generator; `L(t) = A / (1 + t)`.
    pub fn planar_shear(k: f64) -> Matrix3<f64> {
        let mut a = Matrix3::zeros();
        a[(1, 2)] = k;
        a[(2, 2)] = 1.0;
        a
    }

    /// `A = I`; homogeneous dilatation.
    pub fn homogeneous_dilatation() -> Matrix3<f64> {
        Matrix3::identity()
    }

    /// Idempotent cylindrical generator with in-plane shear `K`.
    pub fn cylindrical_dilatation(k: f64) -> Matrix3<f64> {
        let mut a = Matrix3::identity();
        a[(2, 2)] = 0.0;
        a[(0, 2)] = k;
        a
    }

    /// Nilpotent 3-block; `L(t) = A - t A^2` exactly.
    pub fn combined_shear(k1: f64, k2: f64, k3: f64) -> Matrix3<f64> {
        let mut a = Matrix3::zeros();
        a[(0, 1)] = k3;
        a[(0, 2)] = k2;
        a[(1, 2)] = k1;
        a
    }

    /// Defective zero eigenvalue plus a simple unit eigenvalue.
    pub fn simple_shear_decaying_dilatation(k1: f64, k2: f64, k3: f64) -> Matrix3<f64> {
        let mut a = Matrix3::zeros();
        a[(0, 1)] = k2 + k1 * k3;
        a[(0, 2)] = k1;
        a[(2, 1)] = k3;
        a[(2, 2)] = 1.0;
        a
    }
}

/// Eigenvalue structure of `A` read off the characteristic polynomial
/// `x^3 - tr x^2 + c2 x - det`.
///
/// The multiplicity of the zero eigenvalue is decided from the trailing
/// coefficients (each well conditioned in the entries of `A`), not by
/// clustering computed roots: an m-fold root moves like `eps^(1/m)` under
/// coefficient roundoff, which would make double and triple zeros
/// undetectable at any sensible root tolerance.
struct CharStructure {
    zero_mult: usize,
    /// Roots of the deflated polynomial (the nonzero eigenvalues).
    nonzero: Vec<nalgebra::Complex<f64>>,
}

fn char_structure(a: &Matrix3<f64>, tol: f64) -> CharStructure {
    let s = matrix_max_norm(a).max(1e-300);
    let tr = a.trace();
    let det = a.determinant();
    let c2 = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)] + a[(0, 0)] * a[(2, 2)]
        - a[(0, 2)] * a[(2, 0)]
        + a[(1, 1)] * a[(2, 2)]
        - a[(1, 2)] * a[(2, 1)];
    // monic: x^3 + A2 x^2 + A1 x + A0
    let (a2, a1, a0) = (-tr, c2, -det);
    let zero_mult = if a0.abs() <= tol * s.powi(3) {
        if a1.abs() <= tol * s * s {
            if a2.abs() <= tol * s {
                3
            } else {
                2
            }
        } else {
            1
        }
    } else {
        0
    };
    let nonzero = match zero_mult {
        0 => crate::polyroots::roots(&[a0, a1, a2, 1.0]),
        1 => crate::polyroots::roots(&[a1, a2, 1.0]),
        2 => vec![nalgebra::Complex::new(-a2, 0.0)],
        _ => vec![],
    };
    CharStructure { zero_mult, nonzero }
}

/// First positive time at which `det(I + tA)` vanishes, if any.
pub fn first_blowup_time(a: &Matrix3<f64>) -> Option<f64> {
    let scale = matrix_max_norm(a).max(1e-300);
    let st = char_structure(a, DEFAULT_CLUSTER_TOL);
    let mut t_min: Option<f64> = None;
    for lambda in st.nonzero {
        if lambda.im.abs() > DEFAULT_CLUSTER_TOL * scale {
            continue; // complex pair: (1 + t re)^2 + (t im)^2 > 0
        }
        if lambda.re < -DEFAULT_CLUSTER_TOL * scale {
            let t = -1.0 / lambda.re;
            t_min = Some(t_min.map_or(t, |cur: f64| cur.min(t)));
        }
    }
    t_min
}

/// `L(t) = (I + tA)^{-1} A`; both factorization orders agree to 1e-12.
pub fn evaluate_l(flow: &FlowMatrix, t: f64) -> Result<Matrix3<f64>> {
    let a = flow.a;
    if let Some(tc) = first_blowup_time(&a) {
        if t >= tc {
            return Err(CoreError::BlowUp { critical_time: tc });
        }
    }
    let m = Matrix3::identity() + a * t;
    let lu = m.lu();
    let left = lu.solve(&a).ok_or(CoreError::BlowUp { critical_time: t })?;
    // commuting order: A (I + tA)^{-1}
    let inv = lu
        .try_inverse()
        .ok_or(CoreError::BlowUp { critical_time: t })?;
    let right = a * inv;
    debug_assert!(
        (left - right).norm() <= 1e-12 * (1.0 + left.norm()),
        "factorization orders disagree"
    );
    Ok(left)
}

/// Exact collisionless transport over `[s, t]` with extra dissipation
/// `alpha`: `exp(-alpha (t-s)) (I + tA)^{-1} (I + sA)`.
///
/// Applying the returned matrix to each velocity advances the divergence-form
/// drift exactly; maps compose: `drift(s->t) drift(r->s) = drift(r->t)`.
pub fn drift_map(flow: &FlowMatrix, s: f64, t: f64, alpha: f64) -> Result<Matrix3<f64>> {
    debug_assert!(
        s >= 0.0 && t >= s,
        "drift interval must satisfy 0 <= s <= t"
    );
    let a = flow.a;
    if let Some(tc) = first_blowup_time(&a) {
        if t >= tc {
            return Err(CoreError::BlowUp { critical_time: tc });
        }
    }
    let m_t = Matrix3::identity() + a * t;
    let m_s = Matrix3::identity() + a * s;
    let x = m_t
        .lu()
        .solve(&m_s)
        .ok_or(CoreError::BlowUp { critical_time: t })?;
    Ok(x * (-alpha * (t - s)).exp())
}

/// Analytic density law `rho(t) = rho_ref det(I + t_ref A) / det(I + tA)`.
pub fn density(flow: &FlowMatrix, t: f64, rho_ref: f64, t_ref: f64) -> Result<f64> {
    let a = flow.a;
    if let Some(tc) = first_blowup_time(&a) {
        if t >= tc || t_ref >= tc {
            return Err(CoreError::BlowUp { critical_time: tc });
        }
    }
    let det_t = (Matrix3::identity() + a * t).determinant();
    let det_ref = (Matrix3::identity() + a * t_ref).determinant();
    Ok(rho_ref * det_ref / det_t)
}

/// Classifies the flow per the real Jordan structure of `A`, with the default
/// clustering tolerance.
pub fn classify_flow(flow: &FlowMatrix) -> Result<FlowCase> {
    classify_flow_with_tol(flow, DEFAULT_CLUSTER_TOL)
}

/// Classification with an explicit relative tolerance for eigenvalue
/// clustering and rank decisions.
pub fn classify_flow_with_tol(flow: &FlowMatrix, tol: f64) -> Result<FlowCase> {
    let a = flow.a;
    let scale = matrix_max_norm(&a);
    if scale == 0.0 {
        return Err(CoreError::DegenerateFlow);
    }
    if let Some(tc) = first_blowup_time(&a) {
        return Err(CoreError::BlowUp { critical_time: tc });
    }
    let eps = tol * scale;
    let st = char_structure(&a, tol);

    // complex pair among the nonzero eigenvalues?
    let has_complex = st.nonzero.iter().any(|l| l.im.abs() > eps);
    if has_complex {
        // eigenvalues are {alpha +- i beta} plus gamma = 0 iff zero_mult = 1;
        // gamma > 0 was already enforced by the blow-up check
        if st.zero_mult == 0 {
            return Ok(homogeneous_case());
        }
        // gamma = 0: cylindrical dilatation (+ shear)
        return cylindrical_case(&a, eps);
    }

    match st.zero_mult {
        0 => Ok(homogeneous_case()),
        1 => cylindrical_case(&a, eps),
        2 => {
            // distinguish diagonalizable {0,0,eta} (planar shear) from the
            // defective zero block (simple shear with decaying dilatation)
            let geo_mult_zero = 3 - rank_with_tol(&a, eps);
            if geo_mult_zero >= 2 {
                planar_case(&a, eps)
            } else {
                decaying_dilatation_case(&a, eps)
            }
        }
        _ => {
            // nilpotent: simple shear (A^2 = 0) or combined orthogonal shear
            let a2 = a * a;
            if matrix_max_norm(&a2) <= eps * scale {
                simple_shear_case(&a)
            } else {
                combined_shear_case(&a, eps)
            }
        }
    }
}

fn homogeneous_case() -> FlowCase {
    FlowCase {
        family: FlowFamily::HomogeneousDilatation,
        shear_params: vec![],
        basis: Matrix3::identity(),
    }
}

fn rank_with_tol(m: &Matrix3<f64>, eps: f64) -> usize {
    let svd = m.svd(false, false);
    svd.singular_values.iter().filter(|s| **s > eps).count()
}

/// Unit right null vector of `m` (via SVD).
fn null_vector(m: &Matrix3<f64>, eps: f64) -> Result<Vector3<f64>> {
    let svd = m.svd(true, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let (imin, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, s)| (i, *s))
        .unwrap();
    if smin > eps * 10.0 {
        return Err(CoreError::EigenFailure(format!(
            "null space not found: smallest singular value {smin:e}"
        )));
    }
    Ok(vt.row(imin).transpose())
}

/// Cases (ii)/(iii): one vanishing eigenvalue (or complex pair + gamma = 0).
/// `L(t) -> (1/t)(I - a (x) n)` with `A a = 0`, `A^T n = 0`, `a . n = 1`.
fn cylindrical_case(a: &Matrix3<f64>, eps: f64) -> Result<FlowCase> {
    let scale = matrix_max_norm(a);
    let right = null_vector(a, eps.max(1e-14 * scale))?;
    let left = null_vector(&a.transpose(), eps.max(1e-14 * scale))?;
    let dot = right.dot(&left);
    if dot.abs() <= eps {
        return Err(CoreError::EigenFailure(
            "zero eigenvalue is defective where a semisimple one was expected".into(),
        ));
    }
    // scale a so that a . n = 1 with n unit
    let n_hat = left;
    let a_vec = right / (right.dot(&n_hat));
    let e3 = n_hat;
    let a_perp = a_vec - e3 * a_vec.dot(&e3);
    let k_mag = a_perp.norm() * 1.0; // |n| = 1 after normalization
    if k_mag <= eps {
        // pure cylindrical dilatation: any frame with e3 along n
        let (t1, t2) = crate::quad::orthonormal_frame(&e3);
        let basis = Matrix3::from_columns(&[t1, t2, e3]);
        return Ok(FlowCase {
            family: FlowFamily::CylindricalDilatation,
            shear_params: vec![],
            basis,
        });
    }
    let e1 = -a_perp / a_perp.norm();
    let e2 = e3.cross(&e1);
    let basis = Matrix3::from_columns(&[e1, e2, e3]);
    Ok(FlowCase {
        family: FlowFamily::CylindricalDilatationShear,
        shear_params: vec![k_mag],
        basis,
    })
}

/// Case (iv): eigenvalues {0, 0, eta>0}, diagonalizable zero.
/// `L(t) -> (1/t) b (x) m` with `A b = eta b`, `A^T m = eta m`, `b . m = 1`.
fn planar_case(a: &Matrix3<f64>, eps: f64) -> Result<FlowCase> {
    let eta = a.trace(); // 0 + 0 + eta
    let shifted = a - Matrix3::identity() * eta;
    let b_vec = null_vector(&shifted, eps)?;
    let m_vec = null_vector(&shifted.transpose(), eps)?;
    let dot = b_vec.dot(&m_vec);
    if dot.abs() <= eps {
        return Err(CoreError::EigenFailure(
            "eta eigenvalue unexpectedly defective".into(),
        ));
    }
    let m_hat = m_vec;
    let b_scaled = b_vec / b_vec.dot(&m_hat);
    let e3 = m_hat;
    let b_perp = b_scaled - e3 * b_scaled.dot(&e3);
    let k = b_perp.norm();
    let (e1, e2) = if k <= eps {
        let (t1, t2) = crate::quad::orthonormal_frame(&e3);
        (t1, t2)
    } else {
        let e2 = b_perp / k;
        (e2.cross(&e3), e2)
    };
    let basis = Matrix3::from_columns(&[e1, e2, e3]);
    Ok(FlowCase {
        family: FlowFamily::PlanarShear,
        shear_params: vec![k],
        basis,
    })
}

/// Case (v): `A = a (x) n` nilpotent of rank one. SVD gives the frame.
fn simple_shear_case(a: &Matrix3<f64>) -> Result<FlowCase> {
    let svd = a.svd(true, true);
    let k = svd.singular_values[0];
    let u = svd.u.as_ref().unwrap().column(0).into_owned();
    let v = svd.v_t.as_ref().unwrap().row(0).transpose();
    let e1 = u;
    let e2 = v;
    let e3 = e1.cross(&e2);
    let basis = Matrix3::from_columns(&[e1, e2, e3]);
    Ok(FlowCase {
        family: FlowFamily::SimpleShear,
        shear_params: vec![k],
        basis,
    })
}

/// Case (vi): defective zero (2-block) plus simple eta > 0.
/// `L(t) = a (x) n + (1/t) b (x) m + O(1/t^2)`.
fn decaying_dilatation_case(a: &Matrix3<f64>, eps: f64) -> Result<FlowCase> {
    let eta = a.trace();
    let shifted = a - Matrix3::identity() * eta;
    // eigenvectors of the simple eigenvalue eta, pair normalized to b . m = 1
    let b_vec = null_vector(&shifted, eps)?;
    let m_raw = null_vector(&shifted.transpose(), eps)?;
    let bm = b_vec.dot(&m_raw);
    if bm.abs() <= eps {
        return Err(CoreError::EigenFailure("eta eigenvalue defective".into()));
    }
    let m_vec = m_raw / bm; // now b . m = 1

    // nilpotent part S = A - eta b (x) m = a' (x) n'
    let s = a - (b_vec * m_vec.transpose()) * eta;
    // a' spans the zero eigenvector of A
    let a_hat = null_vector(a, eps)?;
    let n_full = s.transpose() * a_hat; // = |a'| n' when a_hat = a'/|a'|
    let k2 = n_full.norm();
    if k2 <= eps {
        return Err(CoreError::EigenFailure(
            "nilpotent part vanished for a defective zero eigenvalue".into(),
        ));
    }
    let e1 = a_hat;
    let e2 = n_full / k2;
    let e3 = e1.cross(&e2);

    // scale the (b, m) pair so that m . e3 = 1
    let me3 = m_vec.dot(&e3);
    if me3.abs() <= eps {
        return Err(CoreError::EigenFailure(
            "normal-form frame degenerate: m . e3 = 0".into(),
        ));
    }
    let m_t = m_vec / me3;
    let b_t = b_vec * me3;
    let k1 = b_t.dot(&e1);
    let k3 = m_t.dot(&e2);
    let basis = Matrix3::from_columns(&[e1, e2, e3]);
    Ok(FlowCase {
        family: FlowFamily::SimpleShearDecayingDilatation,
        shear_params: vec![k1, k2, k3],
        basis,
    })
}

/// Case (vii): nilpotent with `A^2 != 0`. Schur-style frame:
/// `e1` spans `im(A^2)`, `e2` completes `im(A)`.
fn combined_shear_case(a: &Matrix3<f64>, eps: f64) -> Result<FlowCase> {
    let a2 = a * a;
    // any vector with A^2 v != 0
    let mut seed = Vector3::x();
    for cand in [Vector3::x(), Vector3::y(), Vector3::z()] {
        if (a2 * cand).norm() > (a2 * seed).norm() {
            seed = cand;
        }
    }
    let img2 = a2 * seed;
    if img2.norm() <= eps {
        return Err(CoreError::EigenFailure(
            "A^2 numerically zero in the index-3 nilpotent branch".into(),
        ));
    }
    let e1 = img2 / img2.norm();
    let c = a * seed; // in im(A), independent of e1
    let c_perp = c - e1 * c.dot(&e1);
    if c_perp.norm() <= eps {
        return Err(CoreError::EigenFailure(
            "could not complete the image frame of a nilpotent generator".into(),
        ));
    }
    let e2 = c_perp / c_perp.norm();
    let e3 = e1.cross(&e2);
    let k3 = e1.dot(&(a * e2));
    let k1 = e2.dot(&(a * e3));
    let k2 = e1.dot(&(a * e3));
    let basis = Matrix3::from_columns(&[e1, e2, e3]);
    Ok(FlowCase {
        family: FlowFamily::CombinedOrthogonalShear,
        shear_params: vec![k1, k2, k3],
        basis,
    })
}
