//! CSV tables with JSON provenance sidecars.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;

/// Shortest round-trip representation, so equal numbers give equal bytes.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Provenance block: tool versions, experiment kind and the config with its hash.
pub fn provenance(cfg: &ExperimentConfig, kind: Kind) -> Value {
    json!({
        "tool": "magconc",
        "cli_version": env!("CARGO_PKG_VERSION"),
        "core_version": magconc::VERSION,
        "kind": kind.name(),
        "config_sha256": cfg.hash(),
        "config": cfg,
        "rng_seed": cfg.rng_seed,
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes `<artifact>.json` with provenance, the produced files and `summary`.
pub fn write_sidecar(
    artifact: &Path,
    cfg: &ExperimentConfig,
    kind: Kind,
    outputs: &[&Path],
    summary: Value,
) -> Result<(), CliError> {
    let mut v = provenance(cfg, kind);
    let names: Vec<String> =
        outputs.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    v["outputs"] = json!(names);
    v["summary"] = summary;
    write_json(&sidecar_path(artifact), &v)
}
