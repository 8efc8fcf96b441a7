//! The metrics report document and run manifests.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use diacritize::metrics::{DerEntry, DerReport, EditStats};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// `x` rounded to two decimals, or the string `"undefined"`.
fn percent(rate: Option<f64>) -> Value {
    match rate {
        Some(r) => json!((r * 10_000.0).round() / 100.0),
        None => json!("undefined"),
    }
}

pub fn der_entry(e: &DerEntry) -> Value {
    json!({ "errors": e.errors, "total": e.total, "percent": percent(e.rate()) })
}

pub fn edit_entry(e: &EditStats) -> Value {
    json!({
        "substitutions": e.substitutions,
        "insertions": e.insertions,
        "deletions": e.deletions,
        "reference_length": e.reference_length,
        "percent": percent(e.rate()),
    })
}

/// The four DER entries under their stable key names.
pub fn der_report(r: &DerReport) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("der_incl_ce".into(), der_entry(&r.incl_nodiac_with_ce));
    m.insert("der_incl_noce".into(), der_entry(&r.incl_nodiac_wo_ce));
    m.insert("der_excl_ce".into(), der_entry(&r.excl_nodiac_with_ce));
    m.insert("der_excl_noce".into(), der_entry(&r.excl_nodiac_wo_ce));
    m
}

/// Full evaluation report; `asr` adds the `cer` and `wer` blocks.
pub fn metrics_report(der: &DerReport, asr: Option<(&EditStats, &EditStats)>) -> Value {
    let mut m = der_report(der);
    if let Some((cer, wer)) = asr {
        m.insert("cer".into(), edit_entry(cer));
        m.insert("wer".into(), edit_entry(wer));
    }
    Value::Object(m)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io { path: path.to_owned(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Record of one run: the command, its effective configuration and the
/// content hashes of its inputs and outputs. Wall-clock values live only in
/// `run_info`, so manifests of identical runs differ only there.
pub struct Manifest {
    command: &'static str,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    started: u64,
}

impl Manifest {
    pub fn start(command: &'static str, config: &impl Serialize) -> Self {
        Self {
            command,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started: unix_now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Writes the manifest to `<output>.manifest.json`.
    pub fn finish(self, output: &Path) -> Result<std::path::PathBuf, CliError> {
        let doc = json!({
            "command": self.command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "run_info": { "started_unix": self.started, "finished_unix": unix_now() },
        });
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = std::path::PathBuf::from(name);
        write_json(&path, &doc)?;
        Ok(path)
    }
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| CliError::Io { path: path.to_owned(), source: e })
}
