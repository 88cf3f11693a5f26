use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tdbh(config: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdbh")).arg(config).args(extra).output().unwrap()
}

fn write_config(dir: &TempDir, body: &str) -> std::path::PathBuf {
    let path = dir.path().join("run.cfg");
    let out = dir.path().join("out");
    fs::write(&path, format!("{body}\noutput_dir = {}\n", out.display())).unwrap();
    path
}

fn manifest(dir: &TempDir) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap()
}

fn csv(dir: &TempDir, name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(dir.path().join("out").join(name)).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn bands_reports_the_splitting() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "scenario = bands\nv0 = 12.5\nnu = 3");
    let out = tdbh(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir);
    assert_eq!(m["status"], "ok");
    let split = m["summary"]["splitting_2J"].as_f64().unwrap();
    assert!((split / 2.08e-3 - 1.0).abs() < 0.01, "{split}");
    let (header, rows) = csv(&dir, "bands.csv");
    assert_eq!(header[0], "band");
    assert_eq!(rows.len(), 3);
    assert!((rows[0][4] - split).abs() < 1e-15);
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "scenario = bands\nv0 = 12.5\n# note\nwidth = 3");
    let out = tdbh(&cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("width"), "{err}");
}

#[test]
fn bad_override_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "scenario = bands\nv0 = 12.5");
    assert_eq!(tdbh(&cfg, &["--nu", "zero"]).status.code(), Some(2));
    assert_eq!(tdbh(&cfg, &["--nu"]).status.code(), Some(2));
    assert_eq!(tdbh(&cfg, &["--bogus", "1"]).status.code(), Some(2));
}

#[test]
fn overrides_replace_file_values() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "scenario = bands\nv0 = 0\nnu = 2");
    let out = tdbh(&cfg, &["--v0", "12.5", "--nu=4"]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&dir);
    assert_eq!(m["config"]["v0"], 12.5);
    assert_eq!(m["config"]["nu"], 4);
    assert_eq!(csv(&dir, "bands.csv").1.len(), 4);
}

#[test]
fn quench_writes_parameter_and_occupation_series() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "scenario = quench-tdbh\nv0 = 12.5\nn_particles = 8\nlambda_final = 0.6\nnu = 3\nt_final = 2\nsample_dt = 0.1",
    );
    let out = tdbh(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv(&dir, "params_t.csv");
    assert_eq!(header, ["t", "J", "U", "eps", "U_over_J"]);
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| (r[4] - r[2] / r[1]).abs() < 1e-9 * r[4]));
    let (header, rows) = csv(&dir, "natocc_t.csv");
    assert_eq!(header, ["t", "tdbh_n1", "tdbh_n2"]);
    assert!(rows.iter().all(|r| (r[1] + r[2] - 1.0).abs() < 1e-9));
    let m = manifest(&dir);
    let snaps = m["summary"]["momentum_snapshots"].as_array().unwrap();
    assert_eq!(snaps.len(), 6);
    for s in snaps {
        let name = s["file"].as_str().unwrap();
        let (h, rows) = csv(&dir, name);
        assert_eq!(h, ["k", "tdbh"]);
        assert!(rows.iter().all(|r| r[1] >= 0.0));
    }
    assert_eq!(m["conservation"][0]["passed"], true);
}

#[test]
fn quench_checkpoint_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "scenario = quench-tdbh\nv0 = 12.5\nn_particles = 4\nlambda_initial = 0.1\nlambda_final = 0.3\nnu = 2\nt_final = 1",
    );
    assert_eq!(tdbh(&cfg, &[]).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/checkpoint.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), tdbh::tdbh::checkpoint_header(5, 2, 2));
    let state = tdbh::tdbh::parse_checkpoint(lines.next().unwrap(), 5, 2, 2).unwrap();
    assert!((state.t - 1.0).abs() < 1e-12);
    let norm: f64 = state.coeffs.iter().map(|c| c.norm_sqr()).sum();
    assert!((norm - 1.0).abs() < 1e-9);
}

#[test]
fn compare_writes_accumulated_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "scenario = compare\nv0 = 12.5\nn_particles = 4\nlambda_final = 0.12\nnu = 2\nkappa = 2\nt_final = 200\nsample_dt = 2",
    );
    let out = tdbh(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv(&dir, "accerr_t.csv");
    assert_eq!(header, ["t", "bh", "tdbh"]);
    assert_eq!(rows[0][1], 0.0);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1] && w[1][2] >= w[0][2]));
    let (header, _) = csv(&dir, "natocc_t.csv");
    assert_eq!(header.len(), 1 + 2 + 2 + 4);
    let (header, _) = csv(&dir, "momentum_t0.csv");
    assert_eq!(header, ["k", "bh", "tdbh", "exact"]);
    assert_eq!(manifest(&dir)["conservation"].as_array().unwrap().len(), 3);
}

#[test]
fn ground_state_energies_are_ordered() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "scenario = ground-state\nv0 = 12.5\nn_particles = 6\nlambda_final = 0.6\nnu = 3\nkappa = 3");
    let out = tdbh(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = &manifest(&dir)["summary"];
    assert!(s["margin_bh_minus_tdbh"].as_f64().unwrap() > 0.0);
    assert!(s["margin_tdbh_minus_exact"].as_f64().unwrap() >= 0.0);
    assert!(dir.path().join("out/ground_state.csv").exists());
}

#[test]
fn loose_tolerance_is_a_conservation_breach() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "scenario = quench-tdbh\nv0 = 12.5\nn_particles = 4\nlambda_final = 0.6\nnu = 3\nt_final = 50\nintegrator_tol = 0.5",
    );
    assert_eq!(tdbh(&cfg, &[]).status.code(), Some(4));
    let m = manifest(&dir);
    assert_eq!(m["status"], "conservation-breach");
    assert_eq!(m["exit_code"], 4);
}

#[test]
fn dimension_cap_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "scenario = quench-exact\nv0 = 12.5\nn_particles = 10\nlambda_final = 0.6\nkappa = 3\nt_final = 1\ndimension_cap = 100",
    );
    assert_eq!(tdbh(&cfg, &[]).status.code(), Some(2));
    assert_eq!(manifest(&dir)["status"], "config-error");
}

#[test]
fn shipped_preset_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/paper_quench.cfg");
    let cfg = tdbh_cli::config::parse_config(&path, &[]).unwrap();
    assert_eq!(cfg.scenario, tdbh_cli::config::Scenario::QuenchTdbh);
    assert_eq!((cfg.n_particles, cfg.nu), (20, 10));
    assert_eq!((cfg.v0, cfg.lambda_initial, cfg.lambda_final), (12.5, 0.0, 0.6));
}
