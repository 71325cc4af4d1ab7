use std::fs;
use std::path::Path;
use std::process::Command;

use fewbit::harness::{aggregate, run_sweep, write_sweep, ExperimentConfig};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        taps: 60,
        sparsity: 3,
        bit_depths: vec![2, 3, 4],
        snr_db: vec![0.0, 10.0],
        trials: 4,
        rip_samples: 50,
        master_seed: 12,
        ..ExperimentConfig::default()
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = ExperimentConfig { trials: 1, ..small() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_sweep(a.path(), &cfg, &run_sweep(&cfg).unwrap()).unwrap();
    write_sweep(b.path(), &cfg, &run_sweep(&cfg).unwrap()).unwrap();
    for f in ["records.csv", "aggregate.csv", "optimum.csv", "manifest.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let header = String::from_utf8(read(a.path(), "records.csv")).unwrap();
    assert!(header.lines().skip(1).all(|l| l.starts_with(&cfg.hash())));
}

#[test]
fn seed_changes_results() {
    let a = run_sweep(&small()).unwrap();
    let b = run_sweep(&ExperimentConfig { master_seed: 13, ..small() }).unwrap();
    assert_ne!(a.config_hash, b.config_hash);
    assert_ne!(a.records[0].rsnr_db, b.records[0].rsnr_db);
}

#[test]
fn aggregation_ignores_completion_order() {
    let cfg = small();
    let res = run_sweep(&cfg).unwrap();
    let mut shuffled = res.records.clone();
    shuffled.reverse();
    shuffled.swap(1, 7);
    let again = aggregate(&res.config_hash, &cfg, &res.cells, &res.deltas, &shuffled).unwrap();
    assert_eq!(format!("{again:?}"), format!("{:?}", res.aggregates));

    let mut mixed = res.records.clone();
    mixed[2].config_hash = "0000000000000000".into();
    assert!(aggregate(&res.config_hash, &cfg, &res.cells, &res.deltas, &mixed).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small();
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert!(ExperimentConfig::from_toml_str("taps = 10\nbogus = 1\n").is_err());
    assert!(ExperimentConfig::from_toml_str("sparsity = 0\n").is_err());
}

fn fewbit() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fewbit"));
    c.env("RUST_LOG", "error");
    c
}

#[test]
fn cli_table2_prints_csv() {
    let out = fewbit().args(["table2", "--verbatim"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("bit_depth,fs_ghz"));
    let m: Vec<&str> = lines.map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(m, ["1000", "500", "250", "125", "75", "38", "19"]);
}

#[test]
fn cli_sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(&cfg_path, ExperimentConfig { trials: 2, ..small() }.to_toml_string()).unwrap();
    let out_dir = dir.path().join("out");
    let status = fewbit()
        .args(["sweep", "--config"])
        .arg(&cfg_path)
        .args(["--snr", "-5,5", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&read(&out_dir, "manifest.json")).unwrap();
    assert!(manifest["config_toml"].as_str().unwrap().contains("snr_db = [-5.0, 5.0]"));
    assert!(manifest["snr_definition"].as_str().unwrap().contains("per receive slot"));
}

#[test]
fn cli_strict_mode_rejects_infeasible_cells() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--taps", "20", "--sparsity", "2", "--duration", "1e-8", "--bits", "3,20", "--trials", "1", "--rip-samples", "10"];
    let lenient = fewbit().args(args).arg("--out").arg(dir.path()).status().unwrap();
    assert!(lenient.success());
    let strict = fewbit().args(args).args(["--strict", "--out"]).arg(dir.path()).status().unwrap();
    assert!(!strict.success());
}

#[test]
fn cli_khat_and_rip_probe() {
    let dir = tempfile::tempdir().unwrap();
    let status = fewbit()
        .args(["khat", "--taps", "40", "--sparsity", "2", "--bits", "3", "--snr", "10", "--trials", "3", "--grid", "1,2,4", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let summary = String::from_utf8(read(dir.path(), "khat.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);

    let rip = dir.path().join("rip.csv");
    let matrix = dir.path().join("x.csv");
    let status = fewbit()
        .args(["rip-probe", "--rows", "60", "--taps", "20", "--order", "3", "--samples", "50", "--out"])
        .arg(&rip)
        .arg("--matrix-out")
        .arg(&matrix)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(String::from_utf8(read(dir.path(), "x.csv")).unwrap().lines().count(), 60);
    assert!(String::from_utf8(read(dir.path(), "rip.csv")).unwrap().starts_with("sparsity_order,delta_hat"));
}
