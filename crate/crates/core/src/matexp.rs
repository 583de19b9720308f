//! Matrix exponential by scaling and squaring with a Taylor kernel.
//!
//! The matrices exponentiated in this crate are small (3x3 flow generators,
//! the 6x6 moment operator) with moderate norms, where the scaled Taylor
//! series reaches machine precision in at most ~20 terms.

use nalgebra::SMatrix;

/// `exp(a)` for a small dense matrix.
pub fn expm<const D: usize>(a: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    // 1-norm (max column sum)
    let norm = (0..D)
        .map(|j| (0..D).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2.0_f64.powi(s);
    let mut result = SMatrix::<f64, D, D>::identity();
    let mut term = SMatrix::<f64, D, D>::identity();
    for k in 1..=30 {
        term = (term * scaled) / k as f64;
        result += term;
        if term.amax() < 1e-18 * result.amax().max(1.0) {
            break;
        }
    }
    for _ in 0..s {
        result = result * result;
    }
    result
}
