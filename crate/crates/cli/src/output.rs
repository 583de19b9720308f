//! Deterministic artifact writing: CSV tables, a JSON summary and a run
//! manifest with content digests.
//!
//! Floats are serialized with Rust's shortest round-trip formatting, so a
//! rerun with the same config and seed produces byte-identical artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

pub struct ArtifactWriter {
    outdir: PathBuf,
    started: Instant,
    subcommand: String,
    config: BTreeMap<String, String>,
    outputs: BTreeMap<String, (u64, String)>,
}

impl ArtifactWriter {
    pub fn new(
        outdir: &Path,
        subcommand: &str,
        config: &BTreeMap<String, String>,
    ) -> std::io::Result<Self> {
        fs::create_dir_all(outdir)?;
        Ok(ArtifactWriter {
            outdir: outdir.to_path_buf(),
            started: Instant::now(),
            subcommand: subcommand.to_string(),
            config: config.clone(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<f64>],
    ) -> std::io::Result<()> {
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            let mut first = true;
            for v in row {
                if !first {
                    text.push(',');
                }
                first = false;
                text.push_str(&format_float(*v));
            }
            text.push('\n');
        }
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON serialization");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.outdir.join(name), bytes)?;
        self.outputs
            .insert(name.to_string(), (bytes.len() as u64, fnv1a64_hex(bytes)));
        Ok(())
    }

    /// Writes `manifest.json` last: resolved config, seed, version,
    /// wall-clock and the digests of everything written before it.
    pub fn finish(mut self) -> std::io::Result<()> {
        let outputs: Value = self
            .outputs
            .iter()
            .map(|(name, (bytes, digest))| {
                (
                    name.clone(),
                    json!({ "bytes": bytes, "digest_fnv1a64": digest }),
                )
            })
            .collect::<serde_json::Map<String, Value>>()
            .into();
        let manifest = json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "config": self.config,
            "wall_clock_secs": self.started.elapsed().as_secs_f64(),
            "outputs": outputs,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("JSON serialization");
        text.push('\n');
        fs::write(self.outdir.join("manifest.json"), text.as_bytes())?;
        self.outputs.clear();
        Ok(())
    }
}

/// Shortest round-trip decimal representation; negative zero normalized.
pub fn format_float(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    let mut hash = 0xcbf29ce484222325_u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// JSON helper for a 3x3 matrix (row major).
pub fn matrix_json(m: &nalgebra::Matrix3<f64>) -> Value {
    json!([
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ])
}
