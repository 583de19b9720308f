//! Drivers for self-similar dynamics: rescaled runs with the dissipation set
//! to the leading moment eigenvalue (whose steady states realize the
//! self-similar velocity profiles), and growth-exponent fits on physical-mode
//! runs for cross-validation.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsmc::{
    self, DiagnosticsRow, Ensemble, FlowSpec, InitialCondition, Mode, SimConfig, Stepper,
};
use crate::error::{CoreError, Result};
use crate::flows::FlowFamily;
use crate::kernel::AngularKernel;
use crate::moments::leading_eigenpair;

/// Outcome of a rescaled run driven to its steady state.
#[derive(Debug, Clone)]
pub struct SelfSimilarRun {
    /// Terminal ensemble: samples of the self-similar profile.
    pub profile_samples: Vec<Vector3<f64>>,
    /// Leading eigenvalue used as the rescaling dissipation.
    pub alpha_bar: f64,
    /// Scale constant of the initial second moment `M(0) = K_scale N_bar`.
    pub k_scale: f64,
    /// Normalized leading eigenvector (steady stress direction).
    pub n_bar: Matrix3<f64>,
    pub converged: bool,
    /// Growth exponent fitted on a physical-mode companion run, when one ran.
    pub beta_measured: Option<f64>,
    /// Diagnostics trace of the rescaled run.
    pub rows: Vec<DiagnosticsRow>,
}

/// Tuning knobs for steady-state driving.
#[derive(Debug, Clone)]
pub struct SelfSimConfig {
    pub n: usize,
    pub seed: u64,
    /// Hard horizon in rescaled time; `None` picks `400/b`.
    pub t_max: Option<f64>,
    /// Step; `None` uses the default suggestion.
    pub dt: Option<f64>,
    /// Initial energy scale (`K_scale tr(N_bar)` is the initial `tr M`);
    /// `None` normalizes the initial trace to 3.
    pub k_scale: Option<f64>,
}

impl Default for SelfSimConfig {
    fn default() -> Self {
        SelfSimConfig {
            n: 50_000,
            seed: 1,
            t_max: None,
            dt: None,
            k_scale: None,
        }
    }
}

/// Samples a centered Gaussian with covariance `k_scale * n_bar`, then
/// removes the empirical mean exactly.
pub fn init_on_eigencone(
    n: usize,
    k_scale: f64,
    n_bar: &Matrix3<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vector3<f64>>> {
    if k_scale <= 0.0 || k_scale.is_nan() {
        return Err(CoreError::InvalidConfig("k_scale must be positive".into()));
    }
    let cov = n_bar * k_scale;
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| CoreError::NotPositiveDefinite("K_scale * N_bar".into()))?;
    let l = chol.l();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out: Vec<Vector3<f64>> = (0..n)
        .map(|_| {
            let z = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
            l * z
        })
        .collect();
    let mean: Vector3<f64> = out.iter().sum::<Vector3<f64>>() / n as f64;
    for w in out.iter_mut() {
        *w -= mean;
    }
    Ok(out)
}

/// Runs the rescaled dynamics with `alpha = alpha_bar` until the energy trace
/// flattens: over a trailing window of ten relaxation times (`10/b`), the
/// fitted linear trend of `tr M` must stay within two standard errors of
/// zero. Returns the terminal ensemble as the self-similar profile.
pub fn run_to_steady_state(
    flow: &FlowSpec,
    kernel: &AngularKernel,
    cfg: &SelfSimConfig,
) -> Result<SelfSimilarRun> {
    if kernel.gamma() != 0.0 {
        return Err(CoreError::InvalidConfig(
            "self-similar runs require kernel homogeneity gamma = 0".into(),
        ));
    }
    let b = kernel.b();
    if b <= 0.0 || b.is_nan() {
        return Err(CoreError::InvalidConfig(
            "self-similar runs need positive collision strength".into(),
        ));
    }
    let l_bar = flow.rescaled_generator()?;
    let eigen = leading_eigenpair(&l_bar, b)?;
    if !eigen.positive_definite {
        return Err(CoreError::NotPositiveDefinite(
            "leading moment eigenvector".into(),
        ));
    }
    let k_scale = cfg.k_scale.unwrap_or(3.0 / eigen.n_bar.trace());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let velocities = init_on_eigencone(cfg.n, k_scale, &eigen.n_bar, &mut rng)?;
    let mut ens = Ensemble::new(velocities, crate::derive_seed(cfg.seed, 0x5e1f));
    let dt = cfg
        .dt
        .unwrap_or_else(|| SimConfig::suggest_dt(kernel, flow));
    let t_max = cfg.t_max.unwrap_or(400.0 / b);
    let sim = SimConfig {
        n: cfg.n,
        dt,
        t_end: t_max,
        flow: flow.clone(),
        kernel: kernel.clone(),
        seed: 0, // ensemble already seeded
        mode: Mode::Rescaled {
            alpha: eigen.alpha_bar,
        },
        init: InitialCondition::IsotropicGaussian { zeta: 3.0 },
        output_interval: (1.0 / b).min(t_max / 16.0),
        replicas: 1,
        threads: 1,
    };
    let stepper = Stepper::new(&sim)?;

    let window = 10.0 / b;
    let min_time = 2.0 * window;
    let steps_per_output = (sim.output_interval / dt).round().max(1.0) as u64;
    let mut rows = vec![DiagnosticsRow::measure(&ens, 0)];
    let mut interval_collisions = 0u64;
    let mut converged = false;
    let mut step_index = 0u64;
    let mut last_trend = (f64::NAN, f64::NAN);
    while ens.t < t_max {
        interval_collisions += stepper.step(&mut ens)?;
        step_index += 1;
        if step_index.is_multiple_of(steps_per_output) {
            rows.push(DiagnosticsRow::measure(&ens, interval_collisions));
            interval_collisions = 0;
            if ens.t >= min_time {
                let (slope, se) = trailing_trend(&rows, window);
                last_trend = (slope, se);
                if slope.abs() <= 2.0 * se {
                    converged = true;
                    break;
                }
            }
        }
    }
    if !converged {
        return Err(CoreError::NotConverged {
            t_max,
            slope: last_trend.0,
            slope_se: last_trend.1,
        });
    }
    Ok(SelfSimilarRun {
        profile_samples: ens.velocities,
        alpha_bar: eigen.alpha_bar,
        k_scale,
        n_bar: eigen.n_bar,
        converged,
        beta_measured: None,
        rows,
    })
}

/// Least-squares trend of `tr M` over the trailing `window` of rows; returns
/// (slope, slope standard error), both relative to the window mean.
fn trailing_trend(rows: &[DiagnosticsRow], window: f64) -> (f64, f64) {
    let t_end = rows.last().unwrap().t;
    let tail: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= t_end - window)
        .map(|r| (r.t, r.energy))
        .collect();
    if tail.len() < 4 {
        return (f64::INFINITY, 0.0);
    }
    let n = tail.len() as f64;
    let mean_t = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_e = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = tail.iter().map(|p| (p.0 - mean_t).powi(2)).sum::<f64>();
    let sxy = tail
        .iter()
        .map(|p| (p.0 - mean_t) * (p.1 - mean_e))
        .sum::<f64>();
    let slope = sxy / sxx;
    // residual-based standard error of the slope
    let ss_res = tail
        .iter()
        .map(|p| (p.1 - mean_e - slope * (p.0 - mean_t)).powi(2))
        .sum::<f64>();
    let se = (ss_res / (n - 2.0) / sxx).sqrt();
    (slope / mean_e, se / mean_e)
}

/// Fits the growth exponent `beta` from a physical-mode run:
/// `(1/2) d log tr M / dt` for simple shear (and the other constant-generator
/// families), `(1/2) d log tr M / d log(1+t)` for the families evolving in
/// logarithmic time. The fit runs over the final half of the trajectory.
pub fn measure_beta_physical(
    flow: &FlowSpec,
    kernel: &AngularKernel,
    cfg: &SelfSimConfig,
    t_end: f64,
) -> Result<f64> {
    let dt = cfg
        .dt
        .unwrap_or_else(|| SimConfig::suggest_dt(kernel, flow));
    let sim = SimConfig {
        n: cfg.n,
        dt,
        t_end,
        flow: flow.clone(),
        kernel: kernel.clone(),
        seed: crate::derive_seed(cfg.seed, 0xbe7a),
        mode: Mode::Physical,
        init: InitialCondition::IsotropicGaussian { zeta: 3.0 },
        output_interval: (t_end / 200.0).max(dt),
        replicas: 1,
        threads: 1,
    };
    let result = dsmc::run(&sim)?;
    let family = flow
        .case
        .as_ref()
        .map(|c| c.family)
        .unwrap_or(FlowFamily::SimpleShear);
    let log_time = !matches!(
        family,
        FlowFamily::SimpleShear | FlowFamily::CombinedOrthogonalShear
    );
    let xs_ys: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter(|r| r.t >= 0.5 * t_end && r.energy > 0.0)
        .map(|r| {
            let x = if log_time { (1.0 + r.t).ln() } else { r.t };
            (x, r.energy.ln())
        })
        .collect();
    if xs_ys.len() < 8 {
        return Err(CoreError::Simulation(
            "fit window too short for the growth exponent".into(),
        ));
    }
    let n = xs_ys.len() as f64;
    let sx = xs_ys.iter().map(|p| p.0).sum::<f64>();
    let sy = xs_ys.iter().map(|p| p.1).sum::<f64>();
    let sxx = xs_ys.iter().map(|p| p.0 * p.0).sum::<f64>();
    let sxy = xs_ys.iter().map(|p| p.0 * p.1).sum::<f64>();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(0.5 * slope)
}
