//! Flat `key=value` configuration with an optional JSON config file.
//!
//! Command-line pairs override file entries; every value is kept as a string
//! until a typed getter pulls it, so error messages can name the offending
//! key. Unknown keys are rejected up front.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use homoflow_core::dsmc::{FlowSpec, InitialCondition, Mode, SimConfig};
use homoflow_core::flows::canonical;
use homoflow_core::kernel::AngularKernel;
use nalgebra::{Matrix3, Vector3};

/// Configuration error: names the offending key.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error at '{}': {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        key: key.to_string(),
        message: message.into(),
    })
}

/// Key-value store with typed getters and default tracking.
#[derive(Debug, Clone)]
pub struct KeyValues {
    values: BTreeMap<String, String>,
    /// keys actually read, for unknown-key detection
    consumed: std::cell::RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn from_args(args: &[String]) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for arg in args {
            let arg = arg.strip_prefix("--").unwrap_or(arg);
            let Some((k, v)) = arg.split_once('=') else {
                return err(arg, "expected key=value");
            };
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return err(k, "duplicate key");
            }
        }
        let kv = KeyValues {
            values,
            consumed: Default::default(),
        };
        // merge the config file first so CLI pairs win
        if let Some(path) = kv.values.get("config").cloned() {
            kv.consumed.borrow_mut().insert("config".into());
            let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| ConfigError {
                key: "config".into(),
                message: format!("cannot read '{path}': {e}"),
            })?;
            let parsed: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| ConfigError {
                    key: "config".into(),
                    message: format!("invalid JSON in '{path}': {e}"),
                })?;
            let Some(mut obj) = parsed.as_object() else {
                return err("config", "config file must hold a JSON object");
            };
            // a run manifest nests the resolved pairs under "config";
            // accept it directly so a manifest reproduces its run
            if obj.contains_key("artifact_version") {
                if let Some(inner) = obj.get("config").and_then(|c| c.as_object()) {
                    obj = inner;
                }
            }
            let mut merged = BTreeMap::new();
            for (k, v) in obj {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                merged.insert(k.clone(), s);
            }
            merged.extend(kv.values.clone());
            return Ok(KeyValues {
                values: merged,
                consumed: kv.consumed,
            });
        }
        Ok(kv)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s.parse::<f64>().map(Some).map_err(|_| ConfigError {
                key: key.into(),
                message: format!("expected a number, got '{s}'"),
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn f64_required(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key)?.ok_or_else(|| ConfigError {
            key: key.into(),
            message: "required key missing".into(),
        })
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse::<usize>().map_err(|_| ConfigError {
                key: key.into(),
                message: format!("expected a nonnegative integer, got '{s}'"),
            }),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse::<u64>().map_err(|_| ConfigError {
                key: key.into(),
                message: format!("expected an integer, got '{s}'"),
            }),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(other) => err(key, format!("expected true/false, got '{other}'")),
        }
    }

    pub fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s
                .split(',')
                .map(|tok| tok.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map(Some)
                .map_err(|_| ConfigError {
                    key: key.into(),
                    message: format!("expected comma-separated numbers, got '{s}'"),
                }),
        }
    }

    /// Fails if any provided key was never consumed by a getter.
    pub fn reject_unknown(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        for k in self.values.keys() {
            if !consumed.contains(k) {
                return err(k, "unknown key");
            }
        }
        Ok(())
    }

    /// Snapshot of all resolved pairs, for the manifest.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

/// Parses the deformation matrix from `flow=<family>` plus parameters, or
/// from `A=<9 numbers>` (row major). Pure parsing: admissibility is a
/// numeric concern checked at classification time.
pub fn parse_flow_matrix(kv: &KeyValues) -> Result<Matrix3<f64>, ConfigError> {
    if let Some(nums) = kv.numbers("A")? {
        if nums.len() != 9 {
            return err("A", format!("expected 9 numbers, got {}", nums.len()));
        }
        if kv.get("flow").is_some_and(|f| f != "raw") {
            return err(
                "flow",
                "give either flow=<family> or A=<9 numbers>, not both",
            );
        }
        return Ok(Matrix3::from_row_slice(&nums));
    }
    let Some(name) = kv.get("flow") else {
        return err("flow", "required key missing (or provide A=<9 numbers>)");
    };
    let a = match name {
        "simple_shear" => canonical::simple_shear(require_param(kv, "flow.K", "K")?),
        "planar_shear" => canonical::planar_shear(require_param(kv, "flow.K", "K")?),
        "homogeneous_dilatation" => canonical::homogeneous_dilatation(),
        "cylindrical_dilatation" => canonical::cylindrical_dilatation(kv.f64_or("K", 0.0)?),
        "combined_shear" => canonical::combined_shear(
            require_param(kv, "flow.K1", "K1")?,
            require_param(kv, "flow.K2", "K2")?,
            require_param(kv, "flow.K3", "K3")?,
        ),
        "simple_shear_decaying_dilatation" => canonical::simple_shear_decaying_dilatation(
            require_param(kv, "flow.K1", "K1")?,
            require_param(kv, "flow.K2", "K2")?,
            require_param(kv, "flow.K3", "K3")?,
        ),
        other => {
            return err(
                "flow",
                format!(
                    "unknown family '{other}' (expected simple_shear, planar_shear, \
                     homogeneous_dilatation, cylindrical_dilatation, combined_shear, \
                     simple_shear_decaying_dilatation, or A=<9 numbers>)"
                ),
            )
        }
    };
    Ok(a)
}

fn require_param(kv: &KeyValues, error_key: &str, key: &str) -> Result<f64, ConfigError> {
    kv.f64(key)?.ok_or_else(|| ConfigError {
        key: error_key.into(),
        message: "required key missing".into(),
    })
}

/// Builds the collision kernel from `kernel=<preset>` (+ `gamma`,
/// `kernel_values` for the custom preset).
pub fn build_kernel(kv: &KeyValues) -> Result<AngularKernel, ConfigError> {
    let name = kv.get("kernel").unwrap_or("isotropic").to_string();
    let gamma = kv.f64_or("gamma", 0.0)?;
    match name.as_str() {
        "isotropic" if gamma == 0.0 => Ok(AngularKernel::isotropic()),
        "isotropic" => AngularKernel::from_fn(|_| 0.25 / std::f64::consts::PI, gamma, "isotropic")
            .map_err(cfg_err("kernel")),
        "quadratic" if gamma == 0.0 => Ok(AngularKernel::quadratic()),
        "quadratic" => {
            AngularKernel::from_fn(|x| x * x, gamma, "quadratic").map_err(cfg_err("kernel"))
        }
        "custom" => {
            let values = kv.numbers("kernel_values")?.ok_or_else(|| ConfigError {
                key: "kernel_values".into(),
                message: "custom kernel needs tabulated values".into(),
            })?;
            AngularKernel::custom(&values, gamma).map_err(cfg_err("kernel_values"))
        }
        other => err(
            "kernel",
            format!("unknown preset '{other}' (expected isotropic, quadratic, custom)"),
        ),
    }
}

fn cfg_err(key: &'static str) -> impl Fn(homoflow_core::CoreError) -> ConfigError {
    move |e| ConfigError {
        key: key.into(),
        message: e.to_string(),
    }
}

/// Builds the initial condition (`init=gaussian|anisotropic|two_point|shell`).
pub fn build_init(kv: &KeyValues) -> Result<InitialCondition, ConfigError> {
    match kv.get("init").unwrap_or("gaussian") {
        "gaussian" => Ok(InitialCondition::IsotropicGaussian {
            zeta: kv.f64_or("zeta", 3.0)?,
        }),
        "anisotropic" => {
            let nums = kv.numbers("init_cov")?.ok_or_else(|| ConfigError {
                key: "init_cov".into(),
                message: "anisotropic init needs 9 covariance entries (row major)".into(),
            })?;
            if nums.len() != 9 {
                return err("init_cov", format!("expected 9 numbers, got {}", nums.len()));
            }
            Ok(InitialCondition::AnisotropicGaussian {
                cov: Matrix3::from_row_slice(&nums),
            })
        }
        "two_point" => {
            let nums = kv.numbers("init_v")?.ok_or_else(|| ConfigError {
                key: "init_v".into(),
                message: "two-point init needs init_v=<3 numbers>".into(),
            })?;
            if nums.len() != 3 {
                return err("init_v", format!("expected 3 numbers, got {}", nums.len()));
            }
            Ok(InitialCondition::TwoPoint {
                v: Vector3::new(nums[0], nums[1], nums[2]),
            })
        }
        "shell" => Ok(InitialCondition::UniformShell {
            radius: kv.f64_or("radius", 1.0)?,
        }),
        other => err(
            "init",
            format!("unknown initial condition '{other}' (expected gaussian, anisotropic, two_point, shell)"),
        ),
    }
}

/// Assembles a full simulation config around an already-classified flow.
pub fn build_sim_config(kv: &KeyValues, flow: FlowSpec) -> Result<SimConfig, ConfigError> {
    let kernel = build_kernel(kv)?;
    let mode = match kv.get("mode").unwrap_or("physical") {
        "physical" => Mode::Physical,
        "rescaled" => {
            if kernel.gamma() != 0.0 {
                return err(
                    "mode",
                    "rescaled mode requires kernel homogeneity gamma = 0",
                );
            }
            let alpha = match kv.f64("alpha")? {
                Some(a) => a,
                None => {
                    // default: the leading moment eigenvalue of the flow
                    let l = flow.rescaled_generator().map_err(cfg_err("mode"))?;
                    homoflow_core::moments::leading_eigenpair(&l, kernel.b())
                        .map_err(cfg_err("mode"))?
                        .alpha_bar
                }
            };
            Mode::Rescaled { alpha }
        }
        other => return err("mode", format!("unknown mode '{other}'")),
    };
    let dt_default = SimConfig::suggest_dt(&kernel, &flow);
    let cfg = SimConfig {
        n: kv.usize_or("N", 10_000)?,
        dt: kv.f64_or("dt", dt_default)?,
        t_end: kv.f64_or("t_end", 20.0)?,
        flow,
        kernel,
        seed: kv.u64_or("seed", 1)?,
        mode,
        init: build_init(kv)?,
        output_interval: kv.f64_or("output_interval", 0.5)?,
        replicas: kv.usize_or("replicas", 1)?,
        threads: kv.usize_or("threads", 1)?,
    };
    cfg.validate().map_err(|e| ConfigError {
        key: "simulation".into(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}
