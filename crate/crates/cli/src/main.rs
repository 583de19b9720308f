//! Batch front door: parses a subcommand plus flat `key=value` flags,
//! runs the requested experiment and writes deterministic artifacts
//! (`results.csv`, `summary.json`, `manifest.json`) to the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric/convergence error.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use homoflow_core::dsmc::{self, FlowSpec};
use homoflow_core::entropy;
use homoflow_core::flows;
use homoflow_core::moments;
use homoflow_core::selfsim::{self, SelfSimConfig};
use homoflow_core::stability;
use nalgebra::{Matrix3, Vector3};
use serde_json::json;

use config::{build_kernel, build_sim_config, parse_flow_matrix, ConfigError, KeyValues};
use output::{matrix_json, ArtifactWriter};

const HELP: &str = "\
homoflow - particle simulation and moment analysis of deformation flows

USAGE:
    homoflow <subcommand> key=value ...

SUBCOMMANDS:
    classify        classify a deformation matrix into its long-time family
    kernel-info     scalar invariants (b, Lambda_0) of a collision kernel
    moments         integrate the second-moment system; CSV trajectory
    eigen           leading eigenpair of the 6x6 moment operator
    simulate        N-particle run; CSV diagnostics
    selfsim         drive the rescaled dynamics to its self-similar profile
    stability-check evaluate the large-shear sufficient condition
    entropy         entropy estimate and profile constant from samples
    sweep           shear sweep: analytic vs measured growth exponents

COMMON KEYS:
    outdir=DIR        output directory (default out)
    config=FILE.json  JSON object with the same keys; CLI pairs override
    seed=U64          RNG seed (default 1)
    threads=N         worker threads for replicas (default 1)

FLOW KEYS (classify, moments, eigen, simulate, selfsim, sweep):
    flow=simple_shear|planar_shear|homogeneous_dilatation|
         cylindrical_dilatation|combined_shear|simple_shear_decaying_dilatation
    K=, K1=, K2=, K3=   family parameters
    A=a11,a12,...,a33   raw deformation matrix instead of a named family

KERNEL KEYS:
    kernel=isotropic|quadratic|custom   (default isotropic)
    kernel_values=v0,v1,...             custom tabulated values on [-1,1]
    gamma=F                             homogeneity (default 0)

SIMULATION KEYS (simulate, selfsim, sweep):
    N= dt= t_end= output_interval= replicas= mode=physical|rescaled alpha=
    init=gaussian|anisotropic|two_point|shell  zeta= init_cov= init_v= radius=

CSV COLUMN ORDER:
    moments:  t,M11,M22,M33,M12,M13,M23,TrM[,alpha_bar,Nbar11,Nbar22,Nbar33,Nbar12,Nbar13,Nbar23]
    simulate: t,rho,M11,M22,M33,M12,M13,M23,energy,q1,q2,q3,fourth_cumulant,collisions_this_interval
              (replicas>1: each observable followed by its _se column)
    selfsim:  xi1,xi2,xi3 (profile samples)
    sweep:    K,b,K_over_b,lambda1,beta_analytic,beta_measured,beta_rel_error
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help" {
        print!("{HELP}");
        return ExitCode::SUCCESS;
    }
    let subcommand = args[0].clone();
    let kv = match KeyValues::from_args(&args[1..]) {
        Ok(kv) => kv,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&subcommand, &kv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DispatchError::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(DispatchError::Numeric(e)) => {
            eprintln!("numeric error: {e}");
            ExitCode::from(3)
        }
        Err(DispatchError::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
    }
}

enum DispatchError {
    Config(ConfigError),
    Numeric(homoflow_core::CoreError),
    Io(std::io::Error),
}

impl From<ConfigError> for DispatchError {
    fn from(e: ConfigError) -> Self {
        DispatchError::Config(e)
    }
}

impl From<homoflow_core::CoreError> for DispatchError {
    fn from(e: homoflow_core::CoreError) -> Self {
        DispatchError::Numeric(e)
    }
}

impl From<std::io::Error> for DispatchError {
    fn from(e: std::io::Error) -> Self {
        DispatchError::Io(e)
    }
}

fn dispatch(subcommand: &str, kv: &KeyValues) -> Result<(), DispatchError> {
    let outdir = PathBuf::from(kv.get("outdir").unwrap_or("out"));
    match subcommand {
        "classify" => cmd_classify(kv, &outdir),
        "kernel-info" => cmd_kernel_info(kv, &outdir),
        "moments" => cmd_moments(kv, &outdir),
        "eigen" => cmd_eigen(kv, &outdir),
        "simulate" => cmd_simulate(kv, &outdir),
        "selfsim" => cmd_selfsim(kv, &outdir),
        "stability-check" => cmd_stability(kv, &outdir),
        "entropy" => cmd_entropy(kv, &outdir),
        "sweep" => cmd_sweep(kv, &outdir),
        other => Err(DispatchError::Config(ConfigError {
            key: "subcommand".into(),
            message: format!("unknown subcommand '{other}' (see --help)"),
        })),
    }
}

fn resolved_config(kv: &KeyValues) -> BTreeMap<String, String> {
    kv.resolved().clone()
}

/// Parses (config errors) then classifies (numeric errors) the flow.
fn build_flow(kv: &KeyValues) -> Result<FlowSpec, DispatchError> {
    let a = parse_flow_matrix(kv)?;
    FlowSpec::classified(a).map_err(DispatchError::Numeric)
}

fn finish_unknown_check(kv: &KeyValues) -> Result<(), DispatchError> {
    kv.reject_unknown().map_err(DispatchError::from)
}

fn cmd_classify(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let flow = build_flow(kv)?;
    finish_unknown_check(kv)?;
    let case = flow.case.as_ref().expect("classified flow");
    let mut writer = ArtifactWriter::new(outdir, "classify", &resolved_config(kv))?;
    writer.write_json(
        "summary.json",
        &json!({
            "family": case.family.name(),
            "shear_params": case.shear_params,
            "basis_columns": matrix_json(&case.basis),
            "matrix": matrix_json(flow.matrix.matrix()),
        }),
    )?;
    writer.finish()?;
    Ok(())
}

fn cmd_kernel_info(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let kernel = build_kernel(kv)?;
    finish_unknown_check(kv)?;
    let mut writer = ArtifactWriter::new(outdir, "kernel-info", &resolved_config(kv))?;
    writer.write_json(
        "summary.json",
        &json!({
            "name": kernel.name(),
            "gamma": kernel.gamma(),
            "b": kernel.b(),
            "lambda0": kernel.lambda0(),
        }),
    )?;
    writer.finish()?;
    Ok(())
}

fn cmd_moments(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let flow = build_flow(kv)?;
    let b = match kv.f64("b")? {
        Some(b) => b,
        None => build_kernel(kv)?.b(),
    };
    let m0 = match kv.numbers("m0")? {
        Some(nums) if nums.len() == 6 => {
            moments::vec6_to_sym(&nalgebra::SVector::<f64, 6>::from_row_slice(&nums))
        }
        Some(nums) => {
            return Err(ConfigError {
                key: "m0".into(),
                message: format!(
                    "expected 6 numbers (M11,M22,M33,M12,M13,M23), got {}",
                    nums.len()
                ),
            }
            .into())
        }
        None => Matrix3::identity(),
    };
    let t_end = kv.f64_or("t_end", 5.0)?;
    let interval = kv.f64_or("output_interval", 0.1)?;
    let eigen_mode = kv.bool_or("eigen", false)?;
    finish_unknown_check(kv)?;

    let steps = (t_end / interval).round().max(1.0) as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * interval).collect();
    let path = moments::integrate_moments(
        &moments::SecondMoment::new(m0),
        &moments::MomentDrive::Physical(&flow.matrix),
        b,
        &grid,
    )?;

    let eigen = if eigen_mode {
        let l = flow.rescaled_generator()?;
        Some(moments::leading_eigenpair(&l, b)?)
    } else {
        None
    };

    let mut header = vec!["t", "M11", "M22", "M33", "M12", "M13", "M23", "TrM"];
    if eigen.is_some() {
        header.extend_from_slice(&[
            "alpha_bar",
            "Nbar11",
            "Nbar22",
            "Nbar33",
            "Nbar12",
            "Nbar13",
            "Nbar23",
        ]);
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (t, m) in grid.iter().zip(&path) {
        let mm = m.matrix();
        let mut row = vec![
            *t,
            mm[(0, 0)],
            mm[(1, 1)],
            mm[(2, 2)],
            mm[(0, 1)],
            mm[(0, 2)],
            mm[(1, 2)],
            mm.trace(),
        ];
        if let Some(e) = &eigen {
            row.extend_from_slice(&[
                e.alpha_bar,
                e.n_bar[(0, 0)],
                e.n_bar[(1, 1)],
                e.n_bar[(2, 2)],
                e.n_bar[(0, 1)],
                e.n_bar[(0, 2)],
                e.n_bar[(1, 2)],
            ]);
        }
        rows.push(row);
    }
    let mut writer = ArtifactWriter::new(outdir, "moments", &resolved_config(kv))?;
    writer.write_csv("results.csv", &header, &rows)?;
    let final_m = path.last().unwrap().matrix();
    writer.write_json(
        "summary.json",
        &json!({
            "b": b,
            "t_end": t_end,
            "final_trace": final_m.trace(),
            "final_m": matrix_json(final_m),
        }),
    )?;
    writer.finish()?;
    Ok(())
}

fn cmd_eigen(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let flow = build_flow(kv)?;
    let b = match kv.f64("b")? {
        Some(b) => b,
        None => build_kernel(kv)?.b(),
    };
    finish_unknown_check(kv)?;
    let l = flow.rescaled_generator()?;
    let sol = moments::leading_eigenpair(&l, b)?;
    let spectrum: Vec<serde_json::Value> = sol
        .spectrum
        .iter()
        .map(|e| json!({ "re": e.re, "im": e.im }))
        .collect();
    let mut writer = ArtifactWriter::new(outdir, "eigen", &resolved_config(kv))?;
    writer.write_json(
        "summary.json",
        &json!({
            "b": b,
            "alpha_bar": sol.alpha_bar,
            "n_bar": matrix_json(&sol.n_bar),
            "positive_definite": sol.positive_definite,
            "spectrum": spectrum,
        }),
    )?;
    writer.finish()?;
    Ok(())
}

fn simulate_headers(with_se: bool) -> Vec<&'static str> {
    let base = [
        "t",
        "rho",
        "M11",
        "M22",
        "M33",
        "M12",
        "M13",
        "M23",
        "energy",
        "q1",
        "q2",
        "q3",
        "fourth_cumulant",
        "collisions_this_interval",
    ];
    if !with_se {
        return base.to_vec();
    }
    let mut out = vec!["t", "rho"];
    for name in &base[2..] {
        out.push(name);
        out.push(match *name {
            "M11" => "M11_se",
            "M22" => "M22_se",
            "M33" => "M33_se",
            "M12" => "M12_se",
            "M13" => "M13_se",
            "M23" => "M23_se",
            "energy" => "energy_se",
            "q1" => "q1_se",
            "q2" => "q2_se",
            "q3" => "q3_se",
            "fourth_cumulant" => "fourth_cumulant_se",
            "collisions_this_interval" => "collisions_this_interval_se",
            _ => unreachable!(),
        });
    }
    out
}

fn cmd_simulate(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let flow = build_flow(kv)?;
    let cfg = build_sim_config(kv, flow)?;
    finish_unknown_check(kv)?;
    let mut writer = ArtifactWriter::new(outdir, "simulate", &resolved_config(kv))?;
    if cfg.replicas > 1 {
        let result = dsmc::run_replicas(&cfg)?;
        let rows: Vec<Vec<f64>> = result
            .aggregated
            .iter()
            .map(|r| {
                let mut row = vec![r.t, r.rho];
                for m in &r.m {
                    row.push(m.mean);
                    row.push(m.se);
                }
                row.push(r.energy.mean);
                row.push(r.energy.se);
                for q in &r.heat_flux {
                    row.push(q.mean);
                    row.push(q.se);
                }
                row.push(r.fourth_cumulant.mean);
                row.push(r.fourth_cumulant.se);
                row.push(r.collisions_interval.mean);
                row.push(r.collisions_interval.se);
                row
            })
            .collect();
        writer.write_csv("results.csv", &simulate_headers(true), &rows)?;
        let last = result.aggregated.last().unwrap();
        writer.write_json(
            "summary.json",
            &json!({
                "replicas": cfg.replicas,
                "final_t": last.t,
                "final_energy": last.energy.mean,
                "final_energy_se": last.energy.se,
                "final_fourth_cumulant": last.fourth_cumulant.mean,
            }),
        )?;
    } else {
        let result = dsmc::run(&cfg)?;
        let rows: Vec<Vec<f64>> = result
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.t,
                    r.rho,
                    r.m[0],
                    r.m[1],
                    r.m[2],
                    r.m[3],
                    r.m[4],
                    r.m[5],
                    r.energy,
                    r.heat_flux[0],
                    r.heat_flux[1],
                    r.heat_flux[2],
                    r.fourth_cumulant,
                    r.collisions_interval as f64,
                ]
            })
            .collect();
        writer.write_csv("results.csv", &simulate_headers(false), &rows)?;
        let last = result.rows.last().unwrap();
        writer.write_json(
            "summary.json",
            &json!({
                "replicas": 1,
                "final_t": last.t,
                "final_energy": last.energy,
                "final_fourth_cumulant": last.fourth_cumulant,
                "collisions_total": result.final_ensemble.collisions_total(),
            }),
        )?;
    }
    writer.finish()?;
    Ok(())
}

fn cmd_selfsim(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let flow = build_flow(kv)?;
    let kernel = build_kernel(kv)?;
    let cfg = SelfSimConfig {
        n: kv.usize_or("N", 50_000)?,
        seed: kv.u64_or("seed", 1)?,
        t_max: kv.f64("t_max")?,
        dt: kv.f64("dt")?,
        k_scale: kv.f64("k_scale")?,
    };
    let beta_t_end = kv.f64_or("beta_t_end", 120.0)?;
    finish_unknown_check(kv)?;

    let mut run = selfsim::run_to_steady_state(&flow, &kernel, &cfg)?;
    run.beta_measured = Some(selfsim::measure_beta_physical(
        &flow, &kernel, &cfg, beta_t_end,
    )?);

    let rows: Vec<Vec<f64>> = run
        .profile_samples
        .iter()
        .map(|p| vec![p.x, p.y, p.z])
        .collect();
    let cumulant = dsmc::fourth_cumulant(&run.profile_samples)?;
    // standardized odd-moment diagnostic of the profile
    let n_samples = run.profile_samples.len() as f64;
    let (mut q, mut tr) = (Vector3::zeros(), 0.0);
    for p in &run.profile_samples {
        q += p * p.norm_squared();
        tr += p.norm_squared();
    }
    q /= n_samples;
    tr /= n_samples;
    let q_std = q / tr.powf(1.5);
    let relation = entropy::entropy_relation_report(&run, &flow, beta_t_end)?;
    let mut writer = ArtifactWriter::new(outdir, "selfsim", &resolved_config(kv))?;
    writer.write_csv("results.csv", &["xi1", "xi2", "xi3"], &rows)?;
    writer.write_json(
        "summary.json",
        &json!({
            "alpha_bar": run.alpha_bar,
            "beta_measured": run.beta_measured,
            "n_bar": matrix_json(&run.n_bar),
            "k_scale": run.k_scale,
            "converged": run.converged,
            "fourth_cumulant": cumulant,
            "heat_flux_standardized": [q_std.x, q_std.y, q_std.z],
            "samples": run.profile_samples.len(),
            "entropy_relation": {
                "t": beta_t_end,
                "rho": relation.rho,
                "e": relation.e,
                "s_per_rho": relation.s_per_rho,
                "c_g": relation.c_g,
                "c_g_se": relation.c_g_se,
                "c_m": relation.c_m,
                "tail_index": relation.tail_index,
                "heavy_tail": relation.heavy_tail,
            },
        }),
    )?;
    writer.finish()?;
    Ok(())
}

fn cmd_stability(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let kernel = build_kernel(kv)?;
    if kernel.gamma() != 0.0 {
        return Err(ConfigError {
            key: "gamma".into(),
            message: "stability check requires kernel homogeneity gamma = 0".into(),
        }
        .into());
    }
    let k = kv.f64_required("K")?;
    let b = match kv.f64("b")? {
        Some(b) => b,
        None => kernel.b(),
    };
    let opts = stability::SearchOptions {
        grid_level: kv.usize_or("grid_level", 5)?,
        starts: kv.usize_or("starts", 32)?,
        h_rule: (32, 64),
        seed: kv.u64_or("seed", 2024)?,
        threads: kv.usize_or("threads", 1)?,
    };
    finish_unknown_check(kv)?;
    let verdict = stability::criterion_search(&kernel, k, b, &opts);
    let mut writer = ArtifactWriter::new(outdir, "stability-check", &resolved_config(kv))?;
    writer.write_json(
        "summary.json",
        &json!({
            "K": verdict.k,
            "b": verdict.b,
            "criterion_value": verdict.criterion_value,
            "holds": verdict.holds,
            "argmin_form": matrix_json(verdict.argmin_form.coefficients()),
            "argmin_xi": [verdict.argmin_xi.x, verdict.argmin_xi.y, verdict.argmin_xi.z],
            "one_sided": "holds=true certifies the condition; holds=false is inconclusive",
        }),
    )?;
    writer.finish()?;
    Ok(())
}

fn cmd_entropy(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let path = kv
        .get("samples")
        .map(|s| s.to_string())
        .ok_or_else(|| ConfigError {
            key: "samples".into(),
            message: "required: path to a CSV of velocity samples (3 columns)".into(),
        })?;
    finish_unknown_check(kv)?;
    let text = std::fs::read_to_string(&path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.chars().any(|c| c.is_alphabetic()) {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError {
                key: "samples".into(),
                message: format!("line {} of '{path}' is not numeric", lineno + 1),
            })?;
        if cols.len() < 3 {
            return Err(ConfigError {
                key: "samples".into(),
                message: format!("line {} has fewer than 3 columns", lineno + 1),
            }
            .into());
        }
        samples.push(Vector3::new(cols[0], cols[1], cols[2]));
    }
    let estimate = entropy::differential_entropy(&samples)?;
    let (c_g, c_g_se) = entropy::c_g_with_se(&samples, 8)?;
    let tail = entropy::hill_tail_index(&samples, 0.01);
    let mut writer = ArtifactWriter::new(outdir, "entropy", &resolved_config(kv))?;
    writer.write_json(
        "summary.json",
        &json!({
            "n": estimate.n,
            "k": estimate.k,
            "jittered": estimate.jittered,
            "differential_entropy": estimate.value,
            "c_g": c_g,
            "c_g_se": c_g_se,
            "c_m": entropy::maxwellian_constant(),
            "tail_index": tail,
            "heavy_tail": tail.map(|a| a < 4.0).unwrap_or(false),
        }),
    )?;
    writer.finish()?;
    Ok(())
}

fn cmd_sweep(kv: &KeyValues, outdir: &std::path::Path) -> Result<(), DispatchError> {
    let kernel = build_kernel(kv)?;
    let b = kernel.b();
    let k_values = kv.numbers("k_values")?.ok_or_else(|| ConfigError {
        key: "k_values".into(),
        message: "required: comma-separated shear parameters".into(),
    })?;
    let n = kv.usize_or("N", 20_000)?;
    let seed = kv.u64_or("seed", 1)?;
    let t_end = kv.f64_or("t_end", 120.0)?;
    finish_unknown_check(kv)?;

    let mut rows = Vec::new();
    for (i, k) in k_values.iter().enumerate() {
        let flow = FlowSpec::classified(flows::canonical::simple_shear(*k))
            .map_err(DispatchError::Numeric)?;
        let lambda1 = moments::simple_shear_lambda1(*k, b);
        let beta_analytic = b * (lambda1 - 1.0);
        let cfg = SelfSimConfig {
            n,
            seed: homoflow_core::derive_seed(seed, i as u64),
            t_max: None,
            dt: None,
            k_scale: None,
        };
        let beta_measured = selfsim::measure_beta_physical(&flow, &kernel, &cfg, t_end)?;
        let rel_error = if beta_analytic != 0.0 {
            (beta_measured - beta_analytic).abs() / beta_analytic.abs()
        } else {
            beta_measured.abs()
        };
        rows.push(vec![
            *k,
            b,
            *k / b,
            lambda1,
            beta_analytic,
            beta_measured,
            rel_error,
        ]);
    }
    let mut writer = ArtifactWriter::new(outdir, "sweep", &resolved_config(kv))?;
    writer.write_csv(
        "results.csv",
        &[
            "K",
            "b",
            "K_over_b",
            "lambda1",
            "beta_analytic",
            "beta_measured",
            "beta_rel_error",
        ],
        &rows,
    )?;
    let worst = rows.iter().map(|r| r[6]).fold(0.0_f64, f64::max);
    writer.write_json(
        "summary.json",
        &json!({
            "points": rows.len(),
            "b": b,
            "worst_rel_error": worst,
        }),
    )?;
    writer.finish()?;
    Ok(())
}
