//! The analytic moment layer: the closed second-moment ODE for Maxwell
//! molecules, the six-dimensional eigenvalue problem for the rescaled
//! dynamics, closed-form characteristic cubics for simple and planar shear,
//! and the third-moment (heat-flux) growth-rate polynomials.

use nalgebra::{Matrix3, SMatrix, SVector};

use crate::error::{CoreError, Result};
use crate::flows::{evaluate_l, FlowMatrix};
use crate::matexp::expm;
use crate::polyroots::{largest_real_part_root, safeguarded_newton};

pub type Vector6 = SVector<f64, 6>;
pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Symmetric second-moment tensor `M_{jk} = int w_j w_k g(dw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondMoment {
    m: Matrix3<f64>,
}

impl SecondMoment {
    /// Symmetrizes the input; the stored tensor is exactly symmetric.
    pub fn new(m: Matrix3<f64>) -> Self {
        SecondMoment {
            m: (m + m.transpose()) * 0.5,
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// `m = tr(M) / 3`.
    pub fn isotropic_part(&self) -> f64 {
        self.m.trace() / 3.0
    }

    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        self.m
            .symmetric_eigenvalues()
            .iter()
            .all(|l| *l >= -tol * (1.0 + self.m.trace().abs()))
    }
}

/// Coordinates of a symmetric matrix in the basis (11, 22, 33, 12, 13, 23).
pub fn sym_to_vec6(m: &Matrix3<f64>) -> Vector6 {
    Vector6::new(
        m[(0, 0)],
        m[(1, 1)],
        m[(2, 2)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 2)],
    )
}

pub fn vec6_to_sym(v: &Vector6) -> Matrix3<f64> {
    Matrix3::new(v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2])
}

/// Right-hand side of the second-moment system:
/// `dM/dt = -QM - MQ^T - 2b (M - m I)` with `m = tr(M)/3`.
pub fn moment_rhs(m: &Matrix3<f64>, q: &Matrix3<f64>, b: f64) -> Matrix3<f64> {
    let iso = m.trace() / 3.0;
    -(q * m) - (m * q.transpose()) - (m - Matrix3::identity() * iso) * (2.0 * b)
}

/// The 6x6 linear operator of the second-moment system for a constant
/// generator `Q = L + alpha I`.
#[derive(Debug, Clone)]
pub struct MomentOperator {
    pub matrix6: Matrix6,
    pub l: Matrix3<f64>,
    pub b: f64,
    pub alpha: f64,
}

impl MomentOperator {
    pub fn new(l: Matrix3<f64>, b: f64, alpha: f64) -> Self {
        let q = l + Matrix3::identity() * alpha;
        let mut matrix6 = Matrix6::zeros();
        for j in 0..6 {
            let mut e = Vector6::zeros();
            e[j] = 1.0;
            let col = sym_to_vec6(&moment_rhs(&vec6_to_sym(&e), &q, b));
            matrix6.set_column(j, &col);
        }
        MomentOperator {
            matrix6,
            l,
            b,
            alpha,
        }
    }

    pub fn apply(&self, m: &Matrix3<f64>) -> Matrix3<f64> {
        vec6_to_sym(&(self.matrix6 * sym_to_vec6(m)))
    }

    /// Closed-form propagation over `t` via the operator exponential.
    pub fn propagate(&self, m0: &Matrix3<f64>, t: f64) -> Matrix3<f64> {
        let e = expm(&(self.matrix6 * t));
        vec6_to_sym(&(e * sym_to_vec6(m0)))
    }
}

/// Generator of the moment flow at time `t`.
pub enum MomentDrive<'a> {
    /// Constant `Q = L + alpha I`.
    Constant(Matrix3<f64>),
    /// Physical flow: `Q(t) = L(t)` from the deformation matrix.
    Physical(&'a FlowMatrix),
}

impl MomentDrive<'_> {
    fn q(&self, t: f64) -> Result<Matrix3<f64>> {
        match self {
            MomentDrive::Constant(q) => Ok(*q),
            MomentDrive::Physical(flow) => evaluate_l(flow, t),
        }
    }
}

/// Adaptive embedded Runge-Kutta 4(5) (Dormand-Prince) integration of the
/// second-moment system on the times in `t_grid` (strictly increasing,
/// starting at the initial time).
///
/// Relative tolerance 1e-9, absolute 1e-12: comparisons against the analytic
/// layer are then limited by the analytic layer, not integration error.
pub fn integrate_moments(
    m0: &SecondMoment,
    drive: &MomentDrive,
    b: f64,
    t_grid: &[f64],
) -> Result<Vec<SecondMoment>> {
    const RTOL: f64 = 1e-9;
    const ATOL: f64 = 1e-12;
    assert!(!t_grid.is_empty());
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(*m0);
    let mut y = sym_to_vec6(m0.matrix());
    let mut t = t_grid[0];
    let mut h = 1e-3_f64;
    let deriv = |t: f64, y: &Vector6| -> Result<Vector6> {
        let q = drive.q(t)?;
        Ok(sym_to_vec6(&moment_rhs(&vec6_to_sym(y), &q, b)))
    };
    for &t_target in &t_grid[1..] {
        while t < t_target {
            h = h.min(t_target - t);
            loop {
                let (y5, err) = dp54_step(&deriv, t, &y, h)?;
                let scale = ATOL + RTOL * y.amax().max(y5.amax());
                let ratio = err / scale;
                if ratio <= 1.0 {
                    t += h;
                    y = y5;
                    h *= (0.9 * ratio.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
                    break;
                }
                h *= (0.9 * ratio.powf(-0.25)).clamp(0.1, 0.9);
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(CoreError::StepSizeUnderflow { t });
                }
            }
        }
        out.push(SecondMoment::new(vec6_to_sym(&y)));
        t = t_target;
    }
    Ok(out)
}

/// One Dormand-Prince 5(4) step; returns the 5th-order solution and the
/// max-norm of the embedded error estimate.
fn dp54_step(
    f: &impl Fn(f64, &Vector6) -> Result<Vector6>,
    t: f64,
    y: &Vector6,
    h: f64,
) -> Result<(Vector6, f64)> {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // 5th order weights equal the last A row; 4th order weights:
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut k = [Vector6::zeros(); 7];
    k[0] = f(t, y)?;
    for i in 1..7 {
        let mut yi = *y;
        for (j, kj) in k.iter().enumerate().take(i) {
            if A[i][j] != 0.0 {
                yi += kj * (A[i][j] * h);
            }
        }
        k[i] = f(t + C[i] * h, &yi)?;
    }
    let mut y5 = *y;
    for (j, kj) in k.iter().enumerate().take(6) {
        if A[6][j] != 0.0 {
            y5 += kj * (A[6][j] * h);
        }
    }
    let mut y4 = *y;
    for (j, kj) in k.iter().enumerate() {
        if B4[j] != 0.0 {
            y4 += kj * (B4[j] * h);
        }
    }
    Ok((y5, (y5 - y4).amax()))
}

/// Leading eigenpair of the rescaled moment eigenproblem.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Largest-real-part eigenvalue `alpha_bar`.
    pub alpha_bar: f64,
    /// Eigenvector normalized so the full 3x3 array has unit Frobenius norm
    /// (off-diagonal entries counted twice).
    pub n_bar: Matrix3<f64>,
    pub positive_definite: bool,
    /// All six eigenvalues of the problem.
    pub spectrum: Vec<nalgebra::Complex<f64>>,
}

/// Solves the eigenvalue problem
/// `alpha Gamma = -(1/2)(L Gamma + Gamma L^T) - b (Gamma - tr(Gamma)/3 I)`
/// and returns the eigenvalue with the largest real part together with its
/// normalized eigenvector.
///
/// The operator equals half the constant-`L` evolution operator, so moment
/// trajectories grow like `exp(2 alpha_bar t)`.
pub fn leading_eigenpair(l: &Matrix3<f64>, b: f64) -> Result<EigenSolution> {
    assert!(b > 0.0, "collision strength must be positive");
    let evolution = MomentOperator::new(*l, b, 0.0);
    let t_matrix = evolution.matrix6 * 0.5;
    let schur = nalgebra::linalg::Schur::try_new(t_matrix, 1e-13, 50_000)
        .ok_or_else(|| CoreError::EigenFailure("6x6 Schur iteration did not converge".into()))?;
    let eigs = schur.complex_eigenvalues();
    let spectrum: Vec<nalgebra::Complex<f64>> = eigs.iter().copied().collect();

    let scale = b + crate::matrix_max_norm(l);
    let tol = 1e-9 * scale.max(1.0);
    let max_re = spectrum
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let leading_real = spectrum
        .iter()
        .filter(|e| e.re >= max_re - tol)
        .find(|e| e.im.abs() <= tol);
    let alpha_bar = match leading_real {
        Some(e) => e.re,
        None => {
            let top = spectrum
                .iter()
                .max_by(|a, b| a.re.total_cmp(&b.re))
                .unwrap();
            return Err(CoreError::NonRealLeadingEigenvalue {
                re: top.re,
                im: top.im,
                tol,
            });
        }
    };

    // eigenvector: null space of (T - alpha I) via SVD
    let shifted = t_matrix - Matrix6::identity() * alpha_bar;
    let svd = shifted.svd(true, true);
    let vt = svd.v_t.as_ref().expect("V^T requested");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v: Vector6 = vt.row(imin).transpose();
    let mut n_bar = vec6_to_sym(&v);
    // normalization over all nine entries: diag once, off-diagonals twice
    let norm = full_array_norm(&n_bar);
    n_bar /= norm;
    if n_bar.trace() < 0.0 || (n_bar.trace().abs() < 1e-12 && dominant_entry(&n_bar) < 0.0) {
        n_bar = -n_bar;
    }
    let positive_definite = n_bar.symmetric_eigenvalues().iter().all(|e| *e > 0.0);

    debug_assert!({
        let residual = evolution.apply(&n_bar) * 0.5 - n_bar * alpha_bar;
        residual.norm() < 1e-10 * scale.max(1.0)
    });

    Ok(EigenSolution {
        alpha_bar,
        n_bar,
        positive_definite,
        spectrum,
    })
}

fn full_array_norm(m: &Matrix3<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dominant_entry(m: &Matrix3<f64>) -> f64 {
    *m.iter().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap()
}

/// The unique real root `lambda_1 > 1` (for `K != 0`) of
/// `lambda^3 = lambda^2 + K^2 / (6 b^2)`, by safeguarded Newton started from
/// `1 + max(q, q^{1/3})` with `q = K^2/(6 b^2)`.
pub fn simple_shear_lambda1(k: f64, b: f64) -> f64 {
    assert!(b > 0.0);
    if k == 0.0 {
        return 1.0;
    }
    let q = k * k / (6.0 * b * b);
    let f = |x: f64| x * x * x - x * x - q;
    let df = |x: f64| 3.0 * x * x - 2.0 * x;
    let start = 1.0 + q.max(q.cbrt());
    safeguarded_newton(f, df, start, 1.0, start + 1.0, 1e-15)
}

/// Planar-shear growth exponent `beta = b (lambda_max - 1)` from the cubic
/// `lambda^3 + (3B - 1) lambda^2 + (2B^2 - 7B/3) lambda - (2/3)A^2 - (4/3)B^2 = 0`
/// with `A = K/(2b)`, `B = 1/(2b)`.
pub fn planar_shear_beta(k: f64, b: f64) -> f64 {
    assert!(b > 0.0);
    let a = k / (2.0 * b);
    let bb = 1.0 / (2.0 * b);
    let coeffs = [
        -(2.0 / 3.0) * a * a - (4.0 / 3.0) * bb * bb,
        2.0 * bb * bb - (7.0 / 3.0) * bb,
        3.0 * bb - 1.0,
        1.0,
    ];
    let lambda = largest_real_part_root(&coeffs);
    b * (lambda.re - 1.0)
}

/// Closed form of the planar-shear exponent at `K = 0`:
/// `beta = (b/2) [-(1/b + 1) + sqrt((1/b - 1)^2 + (8/3)(1/b))]`.
pub fn planar_shear_beta_closed_form_k0(b: f64) -> f64 {
    let ib = 1.0 / b;
    0.5 * b * (-(ib + 1.0) + ((ib - 1.0).powi(2) + 8.0 / 3.0 * ib).sqrt())
}

/// Third-moment (heat flux) growth rates for shear strength `T ~ K/b`.
#[derive(Debug, Clone, Copy)]
pub struct HeatFluxRates {
    pub t_param: f64,
    /// Second-moment growth rate: largest root of `A (A+1)^2 = (2/3) T^2`.
    pub a_rate: f64,
    /// Heat-flux growth rate: max over the largest roots of the two
    /// third-moment characteristic polynomials.
    pub r_rate: f64,
    /// `R < 3A/2`: heat-flux perturbations decay relative to the
    /// self-similar scale.
    pub stable: bool,
}

/// Solves the second- and third-moment growth-rate polynomials and evaluates
/// the stability inequality `R < 3A/2`.
pub fn heat_flux_rates(t_param: f64) -> HeatFluxRates {
    let t2 = t_param * t_param;
    // A (A+1)^2 = (2/3) T^2  ->  A^3 + 2A^2 + A - (2/3)T^2 = 0
    let a_rate = largest_real_part_root(&[-(2.0 / 3.0) * t2, 1.0, 2.0, 1.0]).re;
    // (R + 3/2)^2 (R + 2/3) = (1/3) T^2
    let cubic = [1.5 - t2 / 3.0, 17.0 / 4.0, 11.0 / 3.0, 1.0];
    // (R + 3/2)^2 (R + 2/3)^2 = 2 T^2 (R + 31/36)
    let quartic = [
        1.0 - 31.0 / 18.0 * t2,
        13.0 / 3.0 - 2.0 * t2,
        241.0 / 36.0,
        13.0 / 3.0,
        1.0,
    ];
    let r1 = largest_real_part_root(&cubic).re;
    let r2 = largest_real_part_root(&quartic).re;
    let r_rate = r1.max(r2);
    HeatFluxRates {
        t_param,
        a_rate,
        r_rate,
        stable: r_rate < 1.5 * a_rate,
    }
}
