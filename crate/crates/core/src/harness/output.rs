use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, SLOT_DEFINITION, SNR_DEFINITION};
use super::sweep::SweepResult;
use crate::Result;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_hash: String,
    master_seed: u64,
    snr_definition: &'static str,
    slot_definition: &'static str,
    pilot_mode: crate::pilot::PilotMode,
    config_toml: String,
    outputs: &'a [&'a str],
}

pub fn write_manifest(dir: &Path, cfg: &ExperimentConfig, outputs: &[&str]) -> Result<()> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        snr_definition: SNR_DEFINITION,
        slot_definition: SLOT_DEFINITION,
        pilot_mode: cfg.pilot_mode,
        config_toml: cfg.to_toml_string(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| crate::Error::Config(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Writes `records.csv`, `aggregate.csv`, `optimum.csv`, `timings.csv` and
/// `manifest.json`. Everything except the timings is a pure function of the
/// config.
pub fn write_sweep(dir: &Path, cfg: &ExperimentConfig, res: &SweepResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("records.csv"), &res.records)?;
    write_csv(&dir.join("aggregate.csv"), &res.aggregates)?;
    write_csv(&dir.join("optimum.csv"), &res.optimum)?;
    write_csv(&dir.join("timings.csv"), &res.timings)?;
    write_manifest(
        dir,
        cfg,
        &["records.csv", "aggregate.csv", "optimum.csv", "timings.csv"],
    )
}
