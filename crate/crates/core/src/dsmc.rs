//! Stochastic N-particle simulation of the normalized velocity distribution
//! under exact collisionless drift plus binary collisions.
//!
//! Physical mode simulates `d g/dt - div_w(L(t) w g) = rho(t) C[g]` with the
//! analytic density entering only as a collision-rate multiplier; rescaled
//! mode simulates the constant-generator dynamics
//! `d G/dt - alpha div(w G) - div(L w G) = C[G]` used for self-similar
//! profiles. Pair collisions follow the mean-field scaling: expected events
//! per step `N rho rate dt / 2`, so each particle collides at frequency
//! `rho Lambda_0` for Maxwell molecules.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{CoreError, Result};
use crate::flows::{classify_flow, density, drift_map, FlowCase, FlowMatrix};
use crate::kernel::AngularKernel;
use crate::matexp::expm;

/// A deformation flow together with its classification, as consumed by the
/// simulator. Physical mode uses the exact matrix `A`; rescaled mode uses the
/// classified family's constant generator.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub matrix: FlowMatrix,
    pub case: Option<FlowCase>,
}

impl FlowSpec {
    /// Classifies `a` (required for rescaled runs and named diagnostics).
    pub fn classified(a: Matrix3<f64>) -> Result<Self> {
        let matrix = FlowMatrix::new(a);
        let case = classify_flow(&matrix)?;
        Ok(FlowSpec {
            matrix,
            case: Some(case),
        })
    }

    /// Wraps `a` without classification (any admissible matrix; physical
    /// mode only).
    pub fn raw(a: Matrix3<f64>) -> Self {
        FlowSpec {
            matrix: FlowMatrix::new(a),
            case: None,
        }
    }

    /// Zero flow (collisional relaxation only).
    pub fn still() -> Self {
        FlowSpec::raw(Matrix3::zeros())
    }

    /// Constant generator for rescaled dynamics, in the normal-form frame.
    /// The zero flow (pure relaxation) has the zero generator.
    pub fn rescaled_generator(&self) -> Result<Matrix3<f64>> {
        if crate::matrix_max_norm(self.matrix.matrix()) == 0.0 {
            return Ok(Matrix3::zeros());
        }
        match &self.case {
            Some(case) => case.rescaled_generator(),
            None => Err(CoreError::InvalidConfig(
                "rescaled mode requires a classified flow".into(),
            )),
        }
    }
}

/// Simulation mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Time-dependent `L(t)` from `A`, collision rate multiplied by the
    /// analytic density `rho(t)` (with `rho(0) = 1`).
    Physical,
    /// Constant generator `L + alpha I`, unit collision-rate multiplier.
    Rescaled { alpha: f64 },
}

/// Initial velocity distribution.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// Isotropic Gaussian with total second moment `zeta` (`zeta/3` per axis).
    IsotropicGaussian { zeta: f64 },
    /// Centered Gaussian with the given covariance.
    AnisotropicGaussian { cov: Matrix3<f64> },
    /// Symmetric two-point law on `{ +v, -v }` (alternating assignment).
    TwoPoint { v: Vector3<f64> },
    /// Uniform on the sphere of the given radius.
    UniformShell { radius: f64 },
}

impl InitialCondition {
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vector3<f64>>> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        match self {
            InitialCondition::IsotropicGaussian { zeta } => {
                if *zeta < 0.0 {
                    return Err(CoreError::InvalidConfig("zeta must be nonnegative".into()));
                }
                let sigma = (zeta / 3.0).sqrt();
                Ok((0..n)
                    .map(|_| {
                        Vector3::new(
                            normal.sample(rng) * sigma,
                            normal.sample(rng) * sigma,
                            normal.sample(rng) * sigma,
                        )
                    })
                    .collect())
            }
            InitialCondition::AnisotropicGaussian { cov } => {
                let chol = nalgebra::Cholesky::new(*cov)
                    .ok_or_else(|| CoreError::NotPositiveDefinite("initial covariance".into()))?;
                let l = chol.l();
                Ok((0..n)
                    .map(|_| {
                        let z = Vector3::new(
                            normal.sample(rng),
                            normal.sample(rng),
                            normal.sample(rng),
                        );
                        l * z
                    })
                    .collect())
            }
            InitialCondition::TwoPoint { v } => {
                Ok((0..n).map(|i| if i % 2 == 0 { *v } else { -*v }).collect())
            }
            InitialCondition::UniformShell { radius } => Ok((0..n)
                .map(|_| loop {
                    let z =
                        Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
                    let nrm = z.norm();
                    if nrm > 1e-12 {
                        return z * (*radius / nrm);
                    }
                })
                .collect()),
        }
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub flow: FlowSpec,
    pub kernel: AngularKernel,
    pub seed: u64,
    pub mode: Mode,
    pub init: InitialCondition,
    /// Diagnostics cadence in simulation time.
    pub output_interval: f64,
    pub replicas: usize,
    /// Worker threads for replica runs (1 keeps everything on one thread;
    /// aggregation order is fixed by replica index either way).
    pub threads: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CoreError::InvalidConfig("need at least 2 particles".into()));
        }
        if self.dt <= 0.0 || self.dt.is_nan() {
            return Err(CoreError::InvalidConfig("dt must be positive".into()));
        }
        if self.t_end < 0.0 {
            return Err(CoreError::InvalidConfig("t_end must be nonnegative".into()));
        }
        if self.output_interval <= 0.0 {
            return Err(CoreError::InvalidConfig(
                "output_interval must be positive".into(),
            ));
        }
        if self.replicas == 0 {
            return Err(CoreError::InvalidConfig("replicas must be >= 1".into()));
        }
        if matches!(self.mode, Mode::Rescaled { .. }) && self.kernel.gamma() != 0.0 {
            return Err(CoreError::InvalidConfig(
                "rescaled mode requires kernel homogeneity gamma = 0".into(),
            ));
        }
        Ok(())
    }

    /// Default step suggestion: `rho Lambda_0 dt <= 0.1` and `||L|| dt <= 0.05`.
    pub fn suggest_dt(kernel: &AngularKernel, flow: &FlowSpec) -> f64 {
        let lam = kernel.lambda0();
        let l_norm = crate::matrix_max_norm(flow.matrix.matrix());
        let by_rate = if lam > 0.0 { 0.1 / lam } else { f64::INFINITY };
        let by_flow = if l_norm > 0.0 {
            0.05 / l_norm
        } else {
            f64::INFINITY
        };
        by_rate.min(by_flow).min(0.1)
    }
}

/// N particle velocities with time, RNG state and the analytic density.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub velocities: Vec<Vector3<f64>>,
    pub t: f64,
    pub rho: f64,
    rng: ChaCha8Rng,
    collisions_total: u64,
    /// running estimate of the max particle speed, for gamma != 0 majorants
    speed_max_estimate: f64,
}

impl Ensemble {
    pub fn new(velocities: Vec<Vector3<f64>>, seed: u64) -> Self {
        let speed_max_estimate = velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ensemble {
            velocities,
            t: 0.0,
            rho: 1.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            collisions_total: 0,
            speed_max_estimate,
        }
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let velocities = cfg.init.sample(cfg.n, &mut rng)?;
        let speed_max_estimate = velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(Ensemble {
            velocities,
            t: 0.0,
            rho: 1.0,
            rng,
            collisions_total: 0,
            speed_max_estimate,
        })
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn collisions_total(&self) -> u64 {
        self.collisions_total
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        self.velocities.iter().sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm_squared()).sum()
    }

    /// Sample second-moment tensor `(1/N) sum w (x) w`.
    pub fn second_moment(&self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for w in &self.velocities {
            m += w * w.transpose();
        }
        m / self.len() as f64
    }

    /// Sample heat flux `(1/N) sum |w|^2 w`.
    pub fn heat_flux(&self) -> Vector3<f64> {
        let mut q = Vector3::zeros();
        for w in &self.velocities {
            q += w * w.norm_squared();
        }
        q / self.len() as f64
    }

    /// Applies a linear map to every velocity (exact drift substep).
    pub fn apply_drift(&mut self, map: &Matrix3<f64>) {
        for w in self.velocities.iter_mut() {
            *w = map * *w;
        }
    }

    /// Collision substep: draws the number of pair events from a Poisson law
    /// with mean `N rho rate_majorant dt / 2` and performs them in order.
    ///
    /// Returns the number of accepted collisions. Momentum and kinetic energy
    /// are conserved exactly by every event.
    pub fn collide_substep(&mut self, kernel: &AngularKernel, rho: f64, dt: f64) -> Result<u64> {
        let n = self.len();
        let gamma = kernel.gamma();
        let lambda0 = kernel.lambda0();
        if lambda0 <= 0.0 || rho <= 0.0 {
            return Ok(0);
        }
        // majorant rate per pair; gamma = 0 needs no rejection
        let (rate, s_ref) = if gamma == 0.0 {
            (lambda0, 1.0)
        } else if gamma > 0.0 {
            // pairwise speed bound: 1.5 x (2 x max speed estimate)
            let s_max = 3.0 * self.speed_max_estimate;
            if !s_max.is_finite() || s_max <= 0.0 {
                return Err(CoreError::Simulation(
                    "speed majorant collapsed (gamma > 0)".into(),
                ));
            }
            (lambda0 * s_max.powf(gamma), s_max)
        } else {
            // gamma < 0: the pair rate is clipped at a floor speed, below
            // which it saturates instead of diverging. The floor (5% of the
            // RMS speed) truncates only the ~1e-4 mass of near-coincident
            // pairs; these probes are qualitative.
            let rms = (self.total_energy() / n as f64).sqrt();
            let s_min = 0.05 * rms;
            if !s_min.is_finite() || s_min <= 0.0 {
                return Err(CoreError::Simulation(
                    "speed floor collapsed (gamma < 0)".into(),
                ));
            }
            (lambda0 * s_min.powf(gamma), s_min)
        };
        let mean_events = n as f64 * rho * rate * dt / 2.0;
        if !mean_events.is_finite() || mean_events > 1e8 {
            return Err(CoreError::Simulation(format!(
                "collision-rate majorant overflow: mean events per step {mean_events:.3e}; \
                 reduce dt or revisit the speed majorant"
            )));
        }
        let events = if mean_events > 0.0 {
            Poisson::new(mean_events)
                .map_err(|e| CoreError::Simulation(format!("Poisson({mean_events}): {e}")))?
                .sample(&mut self.rng) as u64
        } else {
            0
        };
        let mut accepted = 0u64;
        for _ in 0..events {
            let i = self.rng.random_range(0..n);
            let mut j = self.rng.random_range(0..n);
            while j == i {
                j = self.rng.random_range(0..n);
            }
            let rel = self.velocities[i] - self.velocities[j];
            let speed = rel.norm();
            if speed < 1e-300 {
                continue; // coincident velocities: collision is the identity
            }
            if gamma != 0.0 {
                let accept = (speed / s_ref).powf(gamma).min(1.0);
                if self.rng.random::<f64>() >= accept {
                    continue;
                }
            }
            let axis = rel / speed;
            let omega = kernel.sample_omega(&axis, &mut self.rng)?;
            let (wi, wj) = collide(&self.velocities[i], &self.velocities[j], &omega);
            self.velocities[i] = wi;
            self.velocities[j] = wj;
            if gamma > 0.0 {
                let m = wi.norm().max(wj.norm());
                if m > self.speed_max_estimate {
                    self.speed_max_estimate = m;
                }
            }
            accepted += 1;
        }
        self.collisions_total += accepted;
        Ok(accepted)
    }
}

/// Elastic collision rule: exchanges the projection of the relative velocity
/// on the scattering direction. Conserves momentum and kinetic energy
/// exactly.
pub fn collide(
    w: &Vector3<f64>,
    w_star: &Vector3<f64>,
    omega: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    debug_assert!((omega.norm() - 1.0).abs() < 1e-12);
    let transfer = omega * ((w_star - w).dot(omega));
    (w + transfer, w_star - transfer)
}

/// One diagnostics row.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub rho: f64,
    /// Second moments in the order (11, 22, 33, 12, 13, 23).
    pub m: [f64; 6],
    /// `energy = tr M` (per particle).
    pub energy: f64,
    pub heat_flux: [f64; 3],
    pub fourth_cumulant: f64,
    pub collisions_interval: u64,
}

impl DiagnosticsRow {
    pub fn measure(ens: &Ensemble, collisions_interval: u64) -> Self {
        let m = ens.second_moment();
        let q = ens.heat_flux();
        let cumulant = fourth_cumulant(&ens.velocities).unwrap_or(f64::NAN);
        DiagnosticsRow {
            t: ens.t,
            rho: ens.rho,
            m: [
                m[(0, 0)],
                m[(1, 1)],
                m[(2, 2)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 2)],
            ],
            energy: m.trace(),
            heat_flux: [q.x, q.y, q.z],
            fourth_cumulant: cumulant,
            collisions_interval,
        }
    }

    pub fn second_moment_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.m[0], self.m[3], self.m[4], self.m[3], self.m[1], self.m[5], self.m[4], self.m[5],
            self.m[2],
        )
    }
}

/// Pre-resolved per-step transport.
enum StepDrive {
    Physical,
    /// Cached `exp(-(L + alpha I) dt)` for the configured dt.
    Rescaled(Matrix3<f64>),
}

/// Driver stepping one ensemble through the configured dynamics.
pub struct Stepper<'a> {
    cfg: &'a SimConfig,
    drive: StepDrive,
}

impl<'a> Stepper<'a> {
    pub fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let drive = match cfg.mode {
            Mode::Physical => StepDrive::Physical,
            Mode::Rescaled { alpha } => {
                let l = cfg.flow.rescaled_generator()?;
                let q = l + Matrix3::identity() * alpha;
                StepDrive::Rescaled(expm(&(-q * cfg.dt)))
            }
        };
        Ok(Stepper { cfg, drive })
    }

    /// Advances by one step: exact drift, then collisions, then time/density.
    pub fn step(&self, ens: &mut Ensemble) -> Result<u64> {
        let dt = self.cfg.dt;
        let rho_now = ens.rho;
        match &self.drive {
            StepDrive::Physical => {
                let map = drift_map(&self.cfg.flow.matrix, ens.t, ens.t + dt, 0.0)?;
                ens.apply_drift(&map);
            }
            StepDrive::Rescaled(map) => ens.apply_drift(map),
        }
        let accepted = ens.collide_substep(&self.cfg.kernel, rho_now, dt)?;
        ens.t += dt;
        ens.rho = match self.cfg.mode {
            Mode::Physical => density(&self.cfg.flow.matrix, ens.t, 1.0, 0.0)?,
            Mode::Rescaled { .. } => 1.0,
        };
        Ok(accepted)
    }
}

/// Output of a single-replica run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub rows: Vec<DiagnosticsRow>,
    pub final_ensemble: Ensemble,
}

/// Steps the configured ensemble to `t_end`, emitting a diagnostics row at
/// t = 0 and then every `output_interval`.
pub fn run(cfg: &SimConfig) -> Result<RunResult> {
    run_seeded(cfg, cfg.seed)
}

fn run_seeded(cfg: &SimConfig, seed: u64) -> Result<RunResult> {
    let mut cfg_local = cfg.clone();
    cfg_local.seed = seed;
    let stepper = Stepper::new(&cfg_local)?;
    let mut ens = Ensemble::from_config(&cfg_local)?;
    let mut rows = vec![DiagnosticsRow::measure(&ens, 0)];
    let steps = (cfg.t_end / cfg.dt).ceil() as u64;
    let steps_per_output = (cfg.output_interval / cfg.dt).round().max(1.0) as u64;
    let mut interval_collisions = 0u64;
    for k in 1..=steps {
        interval_collisions += stepper.step(&mut ens)?;
        if k % steps_per_output == 0 || k == steps {
            rows.push(DiagnosticsRow::measure(&ens, interval_collisions));
            interval_collisions = 0;
        }
    }
    Ok(RunResult {
        rows,
        final_ensemble: ens,
    })
}

/// Mean and standard error of one observable across replicas.
#[derive(Debug, Clone, Copy)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanSe {
        mean,
        se: (var / n).sqrt(),
    }
}

/// Replica-aggregated diagnostics row.
#[derive(Debug, Clone)]
pub struct AggregatedRow {
    pub t: f64,
    pub rho: f64,
    pub m: [MeanSe; 6],
    pub energy: MeanSe,
    pub heat_flux: [MeanSe; 3],
    pub fourth_cumulant: MeanSe,
    pub collisions_interval: MeanSe,
}

/// Replica output: per-replica results plus per-time aggregation (mean and
/// standard error per observable). Replica seeds derive deterministically
/// from the base seed; aggregation order is fixed by replica index, so the
/// output does not depend on the thread count.
pub struct ReplicaResult {
    pub replicas: Vec<RunResult>,
    pub aggregated: Vec<AggregatedRow>,
}

pub fn run_replicas(cfg: &SimConfig) -> Result<ReplicaResult> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.replicas as u64)
        .map(|i| crate::derive_seed(cfg.seed, i))
        .collect();
    let replicas: Vec<RunResult> = if cfg.threads > 1 && cfg.replicas > 1 {
        let mut out: Vec<Option<Result<RunResult>>> = Vec::new();
        out.resize_with(seeds.len(), || None);
        std::thread::scope(|scope| {
            let chunk = seeds.len().div_ceil(cfg.threads);
            let mut handles = Vec::new();
            for (c, seed_chunk) in seeds.chunks(chunk).enumerate() {
                let cfg_ref = &*cfg;
                let handle = scope.spawn(move || {
                    seed_chunk
                        .iter()
                        .map(|s| run_seeded(cfg_ref, *s))
                        .collect::<Vec<_>>()
                });
                handles.push((c * chunk, handle));
            }
            for (offset, handle) in handles {
                for (i, r) in handle
                    .join()
                    .expect("replica thread panicked")
                    .into_iter()
                    .enumerate()
                {
                    out[offset + i] = Some(r);
                }
            }
        });
        out.into_iter()
            .map(|r| r.expect("replica result missing"))
            .collect::<Result<Vec<_>>>()?
    } else {
        seeds
            .iter()
            .map(|s| run_seeded(cfg, *s))
            .collect::<Result<Vec<_>>>()?
    };

    let n_rows = replicas[0].rows.len();
    let mut aggregated = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let rows: Vec<&DiagnosticsRow> = replicas.iter().map(|rep| &rep.rows[r]).collect();
        let collect = |f: &dyn Fn(&DiagnosticsRow) -> f64| -> Vec<f64> {
            rows.iter().map(|row| f(row)).collect()
        };
        aggregated.push(AggregatedRow {
            t: rows[0].t,
            rho: rows[0].rho,
            m: [
                mean_se(&collect(&|r| r.m[0])),
                mean_se(&collect(&|r| r.m[1])),
                mean_se(&collect(&|r| r.m[2])),
                mean_se(&collect(&|r| r.m[3])),
                mean_se(&collect(&|r| r.m[4])),
                mean_se(&collect(&|r| r.m[5])),
            ],
            energy: mean_se(&collect(&|r| r.energy)),
            heat_flux: [
                mean_se(&collect(&|r| r.heat_flux[0])),
                mean_se(&collect(&|r| r.heat_flux[1])),
                mean_se(&collect(&|r| r.heat_flux[2])),
            ],
            fourth_cumulant: mean_se(&collect(&|r| r.fourth_cumulant)),
            collisions_interval: mean_se(&collect(&|r| r.collisions_interval as f64)),
        });
    }
    Ok(ReplicaResult {
        replicas,
        aggregated,
    })
}

/// Excess-kurtosis aggregate of the radially standardized velocities: the
/// per-axis excess kurtosis in the principal frame of the second-moment
/// tensor, averaged over the axes that carry variance. Zero for a Maxwellian.
///
/// Degenerate axes (variance below `1e-12` of the trace) are excluded from
/// the average so that rank-deficient clouds (e.g. the two-point law) report
/// the kurtosis of their support.
pub fn fourth_cumulant(velocities: &[Vector3<f64>]) -> Result<f64> {
    let n = velocities.len();
    if n < 10 {
        return Err(CoreError::DegenerateSamples(format!(
            "need at least 10 samples for the fourth cumulant, got {n}"
        )));
    }
    let mut m = Matrix3::zeros();
    for w in velocities {
        m += w * w.transpose();
    }
    m /= n as f64;
    let eig = nalgebra::SymmetricEigen::new(m);
    let trace = eig.eigenvalues.iter().sum::<f64>();
    if trace <= 0.0 || trace.is_nan() {
        return Err(CoreError::DegenerateSamples(
            "zero-variance ensemble".into(),
        ));
    }
    let mut total = 0.0;
    let mut axes = 0usize;
    for k in 0..3 {
        let var = eig.eigenvalues[k];
        if var <= 1e-12 * trace {
            continue;
        }
        let axis = eig.eigenvectors.column(k);
        let m4: f64 = velocities.iter().map(|w| w.dot(&axis).powi(4)).sum::<f64>() / n as f64;
        total += m4 / (var * var) - 3.0;
        axes += 1;
    }
    if axes == 0 {
        return Err(CoreError::DegenerateSamples(
            "no axis carries variance".into(),
        ));
    }
    Ok(total / axes as f64)
}
