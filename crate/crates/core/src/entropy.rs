//! Entropy estimation from particle samples and the equilibrium-form entropy
//! relation `s/rho = log(e^{3/2}/rho) + C_G`.
//!
//! The differential entropy uses the Kozachenko-Leonenko k-nearest-neighbor
//! estimator (k = 4, Euclidean metric, digamma bias correction). The profile
//! constant `C_G` follows the mass-2 normalization in which the unit
//! Maxwellian is `pi^{-3/2} exp(-|xi|^2)` and its constant takes the value
//! `C_M = (3/2)(1 - log(3/2))`; concretely
//! `C_G = H - (3/2) log(mean |xi|^2) - (3/2) log(pi)`. Both `C_G` and `C_M`
//! are invariant under rescaling of the samples.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::flows::{density, FlowFamily};
use crate::kdtree::KdTree;
use crate::selfsim::SelfSimilarRun;

/// `C_M = (3/2)(1 - log(3/2))`: the Maxwellian value of the profile constant.
pub fn maxwellian_constant() -> f64 {
    1.5 * (1.0 - 1.5_f64.ln())
}

/// Result of a differential-entropy estimate.
#[derive(Debug, Clone, Copy)]
pub struct EntropyEstimate {
    pub value: f64,
    pub k: usize,
    pub n: usize,
    /// Set when duplicate samples forced a deterministic jitter.
    pub jittered: bool,
}

/// Kozachenko-Leonenko estimate of `-int g log g` for the empirical
/// distribution of `samples` (k = 4).
///
/// Duplicate points (zero neighbor distances) are resolved by a deterministic
/// jitter derived from the sample bytes; the estimate reports that through
/// [`EntropyEstimate::jittered`].
pub fn differential_entropy(samples: &[Vector3<f64>]) -> Result<EntropyEstimate> {
    const K: usize = 4;
    let n = samples.len();
    if n < 100 {
        return Err(CoreError::DegenerateSamples(format!(
            "entropy estimation needs at least 100 samples, got {n}"
        )));
    }
    check_covariance(samples)?;

    let scale = rms_norm(samples);
    if let Some(value) = knn_entropy_sum(samples, K, scale) {
        return Ok(EntropyEstimate {
            value,
            k: K,
            n,
            jittered: false,
        });
    }
    // duplicate points: jitter with a seed derived from the sample bytes,
    // then retry once
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64_of_samples(samples));
    let eps = 1e-10 * scale.max(1e-300);
    let jittered: Vec<Vector3<f64>> = samples
        .iter()
        .map(|p| {
            p + Vector3::new(
                (rng.random::<f64>() - 0.5) * eps,
                (rng.random::<f64>() - 0.5) * eps,
                (rng.random::<f64>() - 0.5) * eps,
            )
        })
        .collect();
    match knn_entropy_sum(&jittered, K, scale) {
        Some(value) => Ok(EntropyEstimate {
            value,
            k: K,
            n,
            jittered: true,
        }),
        None => Err(CoreError::DegenerateSamples(
            "duplicate samples persisted after jitter".into(),
        )),
    }
}

/// Returns `None` when a zero k-th neighbor distance is encountered.
fn knn_entropy_sum(pts: &[Vector3<f64>], k: usize, scale: f64) -> Option<f64> {
    let n = pts.len();
    let tree = KdTree::build(pts);
    let mut log_sum = 0.0;
    for i in 0..n {
        let d = tree.kth_neighbor_distance(i, k);
        if d <= 1e-14 * scale.max(1e-300) {
            return None;
        }
        log_sum += d.ln();
    }
    let v3 = 4.0 / 3.0 * std::f64::consts::PI; // unit-ball volume in 3-D
    Some(digamma_int(n) - digamma_int(k) + v3.ln() + 3.0 * log_sum / n as f64)
}

fn rms_norm(samples: &[Vector3<f64>]) -> f64 {
    (samples.iter().map(|p| p.norm_squared()).sum::<f64>() / samples.len() as f64).sqrt()
}

fn check_covariance(samples: &[Vector3<f64>]) -> Result<()> {
    let n = samples.len() as f64;
    let mean: Vector3<f64> = samples.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in samples {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigenvalues();
    let trace = eig.iter().sum::<f64>();
    if trace <= 0.0 || trace.is_nan() || eig.iter().any(|l| *l < 1e-12 * trace) {
        return Err(CoreError::DegenerateSamples(
            "sample covariance is (numerically) singular".into(),
        ));
    }
    Ok(())
}

/// `psi(m)` for integer arguments: `-gamma + H_{m-1}`, exact.
fn digamma_int(m: usize) -> f64 {
    const EULER_GAMMA: f64 = 0.5772156649015329;
    let mut h = 0.0;
    for i in 1..m {
        h += 1.0 / i as f64;
    }
    -EULER_GAMMA + h
}

fn fnv1a64_of_samples(pts: &[Vector3<f64>]) -> u64 {
    let mut hash = 0xcbf29ce484222325_u64;
    for p in pts.iter().take(4096) {
        for c in [p.x, p.y, p.z] {
            for byte in c.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        }
    }
    hash
}

/// Profile constant `C_G = H - (3/2) log(mean |xi|^2) - (3/2) log(pi)`.
///
/// Scale invariant; equals [`maxwellian_constant`] for Maxwellian samples and
/// is strictly smaller for any other distribution (maximum-entropy bound).
pub fn c_g_constant(samples: &[Vector3<f64>]) -> Result<f64> {
    let h = differential_entropy(samples)?;
    let mean_sq = samples.iter().map(|p| p.norm_squared()).sum::<f64>() / samples.len() as f64;
    if mean_sq <= 0.0 || mean_sq.is_nan() {
        return Err(CoreError::DegenerateSamples(
            "zero-energy sample set".into(),
        ));
    }
    Ok(h.value - 1.5 * mean_sq.ln() - 1.5 * std::f64::consts::PI.ln())
}

/// `C_G` with a standard error from a block split of the samples.
pub fn c_g_with_se(samples: &[Vector3<f64>], blocks: usize) -> Result<(f64, f64)> {
    let value = c_g_constant(samples)?;
    let blocks = blocks.clamp(2, samples.len() / 100);
    let block_len = samples.len() / blocks;
    let mut vals = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let chunk = &samples[b * block_len..(b + 1) * block_len];
        vals.push(c_g_constant(chunk)?);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0);
    // block estimates are independent; the full-sample estimate averages them
    let se = (var / vals.len() as f64).sqrt();
    Ok((value, se))
}

/// Hill estimator of the tail index of `|xi|` on the top `fraction` order
/// statistics. Small indices mean heavy tails.
pub fn hill_tail_index(samples: &[Vector3<f64>], fraction: f64) -> Option<f64> {
    let mut norms: Vec<f64> = samples
        .iter()
        .map(|p| p.norm())
        .filter(|r| *r > 0.0)
        .collect();
    if norms.len() < 100 {
        return None;
    }
    norms.sort_by(f64::total_cmp);
    let k = ((norms.len() as f64 * fraction) as usize).clamp(10, norms.len() - 1);
    let threshold = norms[norms.len() - 1 - k];
    if threshold <= 0.0 {
        return None;
    }
    let mean_log_excess = norms[norms.len() - k..]
        .iter()
        .map(|r| (r / threshold).ln())
        .sum::<f64>()
        / k as f64;
    if mean_log_excess <= 0.0 {
        None
    } else {
        Some(1.0 / mean_log_excess)
    }
}

/// The realized entropy relation at time `t` of a converged self-similar run.
#[derive(Debug, Clone, Copy)]
pub struct EntropyReport {
    pub rho: f64,
    /// Energy per particle at time `t` in physical variables.
    pub e: f64,
    /// `s/rho = log(e^{3/2}/rho) + C_G`.
    pub s_per_rho: f64,
    pub c_g: f64,
    pub c_g_se: f64,
    pub c_m: f64,
    /// Hill tail index of the profile, when measurable.
    pub tail_index: Option<f64>,
    /// Tail index below 4: fourth moments (and possibly the entropy) of the
    /// profile are unreliable.
    pub heavy_tail: bool,
}

/// Combines the analytic density, the measured profile energy and the
/// profile constant into the entropy relation.
///
/// The physical velocity scale is `exp(beta t)` for simple shear and
/// `(1 + t)^beta` for the families evolving in
/// logarithmic time.
pub fn entropy_relation_report(
    run: &SelfSimilarRun,
    flow: &crate::dsmc::FlowSpec,
    t: f64,
) -> Result<EntropyReport> {
    if !run.converged {
        return Err(CoreError::Simulation(
            "entropy relation requires a converged self-similar run".into(),
        ));
    }
    let beta = run.beta_measured.unwrap_or(run.alpha_bar);
    let family = flow
        .case
        .as_ref()
        .map(|c| c.family)
        .unwrap_or(FlowFamily::SimpleShear);
    let velocity_scale = match family {
        FlowFamily::SimpleShear | FlowFamily::CombinedOrthogonalShear => (beta * t).exp(),
        _ => (1.0 + t).powf(beta),
    };
    let rho = density(&flow.matrix, t, 1.0, 0.0)?;
    let xi_sq = run
        .profile_samples
        .iter()
        .map(|p| p.norm_squared())
        .sum::<f64>()
        / run.profile_samples.len() as f64;
    let e = velocity_scale * velocity_scale * xi_sq;
    let (c_g, c_g_se) = c_g_with_se(&run.profile_samples, 8)?;
    let tail_index = hill_tail_index(&run.profile_samples, 0.01);
    let heavy_tail = tail_index.map(|a| a < 4.0).unwrap_or(false);
    Ok(EntropyReport {
        rho,
        e,
        s_per_rho: (e.powf(1.5) / rho).ln() + c_g,
        c_g,
        c_g_se,
        c_m: maxwellian_constant(),
        tail_index,
        heavy_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn gaussian_cloud(n: usize, sigma: f64, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| {
                Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                )
            })
            .collect()
    }

    #[test]
    fn gaussian_entropy_matches_closed_form() {
        // H = (3/2) log(2 pi e) for a standard 3-D Gaussian
        let pts = gaussian_cloud(100_000, 1.0, 42);
        let h = differential_entropy(&pts).unwrap();
        let expect = 1.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!(
            (h.value - expect).abs() < 0.03,
            "H = {}, expect {expect}",
            h.value
        );
        assert!(!h.jittered);
    }

    #[test]
    fn entropy_scaling_law() {
        // scaling samples by lambda shifts H by 3 log lambda
        let pts = gaussian_cloud(50_000, 1.0, 7);
        let lambda = 2.5;
        let scaled: Vec<Vector3<f64>> = pts.iter().map(|p| p * lambda).collect();
        let h0 = differential_entropy(&pts).unwrap().value;
        let h1 = differential_entropy(&scaled).unwrap().value;
        assert!((h1 - h0 - 3.0 * lambda.ln()).abs() < 0.03);
    }

    #[test]
    fn uniform_cube_entropy_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<Vector3<f64>> = (0..100_000)
            .map(|_| {
                Vector3::new(
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                )
            })
            .collect();
        let h = differential_entropy(&pts).unwrap();
        assert!(h.value.abs() < 0.03, "H = {}", h.value);
    }

    #[test]
    fn duplicates_are_jittered_deterministically() {
        let mut pts = gaussian_cloud(500, 1.0, 3);
        // k = 4 only breaks when at least k+1 points coincide
        for i in 100..106 {
            pts[i] = pts[0];
        }
        let a = differential_entropy(&pts).unwrap();
        let b = differential_entropy(&pts).unwrap();
        assert!(a.jittered);
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn degenerate_covariance_rejected() {
        // all points in a plane
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Vector3<f64>> = (0..1000)
            .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>(), 0.0))
            .collect();
        assert!(differential_entropy(&pts).is_err());
    }

    #[test]
    fn maxwellian_profile_constant() {
        let pts = gaussian_cloud(100_000, 0.73, 21);
        let cg = c_g_constant(&pts).unwrap();
        assert!(
            (cg - maxwellian_constant()).abs() < 0.05,
            "C_G = {cg}, C_M = {}",
            maxwellian_constant()
        );
    }

    #[test]
    fn profile_constant_is_scale_invariant() {
        let pts = gaussian_cloud(50_000, 1.0, 29);
        let scaled: Vec<Vector3<f64>> = pts.iter().map(|p| p * 7.3).collect();
        let a = c_g_constant(&pts).unwrap();
        let b = c_g_constant(&scaled).unwrap();
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn profile_constant_rotation_invariant() {
        let pts = gaussian_cloud(50_000, 1.0, 31);
        let rot = nalgebra::Rotation3::from_euler_angles(0.4, -0.9, 1.7).into_inner();
        let rotated: Vec<Vector3<f64>> = pts.iter().map(|p| rot * p).collect();
        let a = c_g_constant(&pts).unwrap();
        let b = c_g_constant(&rotated).unwrap();
        assert!((a - b).abs() < 0.02);
    }

    #[test]
    fn estimator_error_decreases_with_n() {
        let expect = 1.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        let mut medians = Vec::new();
        for n in [1_000usize, 10_000, 100_000] {
            let mut errs: Vec<f64> = (0..20)
                .map(|s| {
                    let pts = gaussian_cloud(n, 1.0, 1000 + s);
                    (differential_entropy(&pts).unwrap().value - expect).abs()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            medians.push(errs[errs.len() / 2]);
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "medians not decreasing: {medians:?}"
        );
    }

    #[test]
    fn non_gaussian_cloud_stays_below_maximum_entropy_bound() {
        // uniform shell: strongly non-Maxwellian
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let pts = crate::dsmc::InitialCondition::UniformShell { radius: 1.0 }
            .sample(50_000, &mut rng)
            .unwrap();
        // a shell has (numerically) full-rank covariance but is singular in
        // radius: its differential entropy estimate is very negative, so
        // C_G << C_M
        let cg = c_g_constant(&pts).unwrap();
        assert!(cg < maxwellian_constant());
    }

    #[test]
    fn heavy_tail_flagging() {
        // multivariate t with 3 degrees of freedom: tail index exactly 3
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<Vector3<f64>> = (0..50_000)
            .map(|_| {
                let chi2: f64 = (0..3)
                    .map(|_| normal.sample(&mut rng))
                    .map(|z: f64| z * z)
                    .sum();
                let scale = (3.0 / chi2.max(1e-12)).sqrt();
                Vector3::new(
                    normal.sample(&mut rng) * scale,
                    normal.sample(&mut rng) * scale,
                    normal.sample(&mut rng) * scale,
                )
            })
            .collect();
        let idx = hill_tail_index(&pts, 0.01).unwrap();
        assert!(idx < 4.0, "expected heavy tail, index {idx}");
        let gauss = gaussian_cloud(50_000, 1.0, 43);
        let idx_g = hill_tail_index(&gauss, 0.01).unwrap();
        assert!(idx_g > 4.0, "gaussian flagged heavy: {idx_g}");
    }
}
