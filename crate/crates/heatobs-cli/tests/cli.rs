use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const STRIPES: &str = r#"
[set]
kind = "periodic_stripes"
axis = 0
width = 0.5
period = 1.0
phase = 0.0
"#;

fn heatobs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatobs"))
        .args(args)
        .current_dir(dir)
        .env_remove("HEATOBS_WORKERS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn spectral_config() -> String {
    format!("schema_version = 1\nseed = 5\n[grid]\nn = 1\nside = 20.0\nm = 256\n{STRIPES}\n[experiment]\nkind = \"spectral-sweep\"\nbands = [2.0, 4.0]\n")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn clean_run_exits_zero_and_writes_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &spectral_config());
    let out = heatobs(&["spectral-sweep", "--config", &cfg, "--out", "rep"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["spectral-sweep.csv", "spectral-sweep.json", "spectral-sweep.timings.csv"] {
        assert!(dir.path().join("rep").join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("rep/spectral-sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn reports_are_deterministic_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "schema_version = 1\n[grid]\nn = 1\nside = 40.0\nm = 512\n[set]\nkind = \"ball\"\ncenter = [0.0]\nradius = 1.0\n\
         [experiment]\nkind = \"interpolation\"\nt_values = [0.5, 1.0]\nsamples = 6\n\
         data = {{ kind = \"gaussian\", spread = 0.5 }}\n"
    );
    let cfg = write_config(dir.path(), "i.toml", &body);
    let a = heatobs(&["interpolation", "--config", &cfg, "--out", "a", "--seed", "9", "--workers", "1"], dir.path());
    let b = heatobs(&["interpolation", "--config", &cfg, "--out", "b", "--seed", "9", "--workers", "4"], dir.path());
    let c = heatobs(&["interpolation", "--config", &cfg, "--out", "c", "--seed", "10"], dir.path());
    for o in [&a, &b, &c] {
        assert_eq!(o.status.code(), Some(0), "{}", stderr(o));
    }
    let read = |d: &str| fs::read(dir.path().join(d).join("interpolation.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn workers_env_is_honoured() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &spectral_config());
    let ok = Command::new(env!("CARGO_BIN_EXE_heatobs"))
        .args(["spectral-sweep", "--config", &cfg, "--out", "rep"])
        .current_dir(dir.path())
        .env("HEATOBS_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let bad = Command::new(env!("CARGO_BIN_EXE_heatobs"))
        .args(["spectral-sweep", "--config", &cfg, "--out", "rep"])
        .current_dir(dir.path())
        .env("HEATOBS_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn flagged_rows_exit_three() {
    let dir = TempDir::new().unwrap();
    let body = "schema_version = 1\nn = 1\n[experiment]\nkind = \"constants-chain\"\n\
                gammas = [0.5]\nscales = [1.0]\nthetas = [0.5]\nt_values = [1.0]\n";
    let cfg = write_config(dir.path(), "c.toml", body);
    let out = heatobs(&["constants-chain", "--config", &cfg, "--out", "rep"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("rep/constants-chain.csv")).unwrap();
    assert!(csv.contains("OVERFLOW"), "{csv}");
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("version.toml", spectral_config().replace("schema_version = 1", "schema_version = 2"), "schema_version"),
        ("unknown.toml", spectral_config().replace("seed = 5", "seed = 5\nspeed = 3"), "speed"),
        ("domain.toml", spectral_config().replace("side = 20.0", "side = -1.0"), "side"),
    ];
    for (name, body, field) in cases {
        let cfg = write_config(dir.path(), name, &body);
        let out = heatobs(&["spectral-sweep", "--config", &cfg, "--out", "rep"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(stderr(&out).contains(field), "{name}: {}", stderr(&out));
    }
    let missing = heatobs(&["spectral-sweep", "--config", "nope.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn subcommand_must_match_kind() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &spectral_config());
    let out = heatobs(&["thickness", "--config", &cfg, "--out", "rep"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("experiment.kind"));
}

#[test]
fn plot_data_roundtrip_and_empty_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &spectral_config());
    assert_eq!(heatobs(&["spectral-sweep", "--config", &cfg, "--out", "rep"], dir.path()).status.code(), Some(0));
    let out = heatobs(&["plot-data", "--report", "rep/spectral-sweep.csv", "--out", "plots"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dat = fs::read_to_string(dir.path().join("plots/spectral-sweep.dat")).unwrap();
    let mut lines = dat.lines();
    assert_eq!(lines.next(), Some("# N ln_C_est"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], 2.0);

    let csv = fs::read_to_string(dir.path().join("rep/spectral-sweep.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    fs::write(dir.path().join("rep/spectral-sweep.csv"), format!("{header}\n")).unwrap();
    let empty = heatobs(&["plot-data", "--report", "rep/spectral-sweep.csv", "--out", "plots"], dir.path());
    assert_eq!(empty.status.code(), Some(2));
}
