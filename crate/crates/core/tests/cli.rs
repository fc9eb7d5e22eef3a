//! End-to-end tests of the `sded` binary: exit codes, outputs,
//! determinism, and the documented overrides.

mod common;

use common::fixture;
use std::path::Path;
use std::process::Command;

fn sded() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sded"))
}

fn write_config(
    dir: &Path,
    out: &Path,
    count: usize,
    sigma: f64,
    load_csv: &Path,
) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        r#"
[case]
path = "{case}"

[forecasts]
load = "{load}"
wind = "{wind}"

[scenarios]
count = {count}
noise_sigma = {sigma}
seed = 11
coupling = {{ mode = "rank" }}

[solver]
choice = "internal-fastpath"

[output]
dir = "{out}"
"#,
        case = fixture("threebus.case.json").display(),
        load = load_csv.display(),
        wind = fixture("forecasts/threebus_wind.csv").display(),
        out = out.display(),
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn scenarios_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &out,
        2,
        0.05,
        &fixture("forecasts/threebus_load.csv"),
    );
    let status = sded()
        .args(["--config"])
        .arg(&config)
        .arg("scenarios")
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("scenarios.csv")).unwrap();
    assert!(csv.starts_with("scenario,prob,t,entity_kind,entity_id,value_mw\n"));
    // forecast rows + 2 scenarios x 2 steps x (3 buses + 1 plant)
    assert_eq!(csv.lines().count(), 1 + 2 * 4 + 2 * 2 * 4);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn single_scenario_zero_sigma_equals_pdf_mean_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &out,
        1,
        0.0,
        &fixture("forecasts/threebus_load.csv"),
    );
    let status = sded()
        .args(["--config"])
        .arg(&config)
        .arg("scenarios")
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("scenarios.csv")).unwrap();
    // bundled percentile spreads are symmetric, so the single stratum
    // (the PDF mean) coincides with the forecast (p50) rows
    let mut forecast = std::collections::HashMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let key = (
            f[3].trim_start_matches("forecast_").to_string(),
            f[2].to_string(),
            f[4].to_string(),
        );
        let value: f64 = f[5].parse().unwrap();
        if f[0] == "-1" {
            forecast.insert(key, value);
        } else {
            let expect = forecast[&key];
            assert!(
                (value - expect).abs() <= 1e-9 * expect.abs().max(1.0),
                "{key:?}: scenario {value} vs forecast {expect}"
            );
        }
    }
}

#[test]
fn missing_forecast_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.csv");
    let config = write_config(dir.path(), &out, 2, 0.05, &missing);
    let output = sded()
        .args(["--config"])
        .arg(&config)
        .arg("scenarios")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nope.csv"), "stderr: {stderr}");
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "this is not a config").unwrap();
    let output = sded()
        .args(["--config"])
        .arg(&path)
        .arg("solve")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn unknown_solver_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &out,
        2,
        0.05,
        &fixture("forecasts/threebus_load.csv"),
    );
    let output = sded()
        .args(["--config"])
        .arg(&config)
        .args(["--solver", "simulated-annealing", "solve"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn solve_writes_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(
        dir.path(),
        &out_a,
        2,
        0.05,
        &fixture("forecasts/threebus_load.csv"),
    );
    assert!(sded()
        .args(["--config"])
        .arg(&config)
        .arg("solve")
        .status()
        .unwrap()
        .success());
    // second run into another directory via the SDED_OUT env override
    assert!(sded()
        .args(["--config"])
        .arg(&config)
        .arg("solve")
        .env("SDED_OUT", &out_b)
        .status()
        .unwrap()
        .success());
    for name in ["dispatch.csv", "costs.json", "solution.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn export_mps_reparses_to_same_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &out,
        2,
        0.05,
        &fixture("forecasts/threebus_load.csv"),
    );
    assert!(sded()
        .args(["--config"])
        .arg(&config)
        .arg("export-mps")
        .status()
        .unwrap()
        .success());
    let model = sded::milp::parse_mps(out.join("model.mps")).unwrap();
    assert!(model.n_vars() > 0 && model.n_rows() > 0);
    assert_eq!(model.binary_indices().len(), 12);
    assert!(out.join("model.mps.names").exists());
}
