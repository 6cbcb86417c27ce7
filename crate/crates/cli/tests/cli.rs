//! End-to-end tests of the `pso` binary: exit codes, output layout, and
//! round-trips between the CSV and JSON forms of the same run.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_pso")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pso-cli-{}-{name}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

fn pso(args: &[&str]) -> Output {
    Command::new(exe()).args(args).output().expect("spawn pso")
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("read {file}: {e}"))
}

#[test]
fn unknown_keys_are_rejected_with_exit_2() {
    let out = pso(&["run", "sigma3=1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sigma3"), "stderr should name the key: {err}");
}

#[test]
fn missing_config_file_is_exit_2() {
    let out = pso(&["--config", "/nonexistent/pso.toml", "run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_epoch_run_writes_the_initial_record() {
    let dir = scratch("zero");
    let out = pso(&[
        "run",
        "--out-dir",
        dir.to_str().unwrap(),
        "objective.dim=3",
        "swarm.n=8",
        "run.t_final=0.0",
    ]);
    assert!(out.status.success());
    let series = read(&dir, "series.csv");
    let lines: Vec<&str> = series.lines().collect();
    assert_eq!(lines.len(), 2, "header plus the t = 0 row");
    assert!(lines[0].starts_with("t,H,variance,best_value,consensus_0"));
    assert!(lines[1].starts_with("0."));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn series_csv_round_trips_the_report_exactly() {
    let dir = scratch("roundtrip");
    let out = pso(&[
        "run",
        "--out-dir",
        dir.to_str().unwrap(),
        "objective.name=sphere",
        "objective.dim=2",
        "swarm.n=12",
        "run.t_final=1.0",
        "run.recording_interval=10",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir, "run_report.json")).expect("valid json");
    let series = report["series"].as_array().expect("series array");
    let csv = read(&dir, "series.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), series.len());
    for (row, rec) in rows.iter().zip(series) {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        let want = [
            rec["t"].as_f64().unwrap(),
            rec["h"].as_f64().unwrap(),
            rec["variance"].as_f64().unwrap(),
            rec["best_value"].as_f64().unwrap(),
            rec["consensus"][0].as_f64().unwrap(),
            rec["consensus"][1].as_f64().unwrap(),
        ];
        for (got, want) in cells.iter().zip(want) {
            assert_eq!(got.to_bits(), want.to_bits(), "csv must round-trip bit-exactly");
        }
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn effective_config_reproduces_the_run() {
    let first = scratch("eff1");
    let second = scratch("eff2");
    let out = pso(&[
        "run",
        "--out-dir",
        first.to_str().unwrap(),
        "objective.dim=2",
        "swarm.n=10",
        "run.t_final=0.5",
        "run.seed=99",
    ]);
    assert!(out.status.success());
    let cfg = first.join("effective_config.toml");
    let out = pso(&[
        "--config",
        cfg.to_str().unwrap(),
        "run",
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        read(&first, "series.csv"),
        read(&second, "series.csv"),
        "replay from the emitted config must be byte-identical"
    );
    std::fs::remove_dir_all(&first).ok();
    std::fs::remove_dir_all(&second).ok();
}

#[test]
fn recording_interval_controls_the_row_count() {
    let dir = scratch("interval");
    let out = pso(&[
        "run",
        "--out-dir",
        dir.to_str().unwrap(),
        "objective.dim=2",
        "swarm.n=8",
        "run.epochs=10000",
        "run.recording_interval=100",
    ]);
    assert!(out.status.success());
    let series = read(&dir, "series.csv");
    // Header, the t = 0 record, then one row per 100 steps.
    assert_eq!(series.lines().count(), 102);
    std::fs::remove_dir_all(&dir).ok();
}
