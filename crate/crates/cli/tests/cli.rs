use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wildmhd::{compute_c_constants, choose_lambda};
use wildmhd_cli::artifacts::{Provenance, FIELDS, PROVENANCE};
use wildmhd_cli::config;

const TINY: &str = r#"
[domain]
x = [0.0, 1.0]
y = [0.0, 1.0]
t_final = 1.0

[grid]
nt = 8
nx = 8
ny = 8

[[pieces]]
rect = [0.0, 0.5, 0.0, 1.0]
rho = 1.0
p = 1.0
b = 2.0

[[pieces]]
rect = [0.5, 1.0, 0.0, 1.0]
rho = 1.0
p = 2.0
b = 1.0

[run]
max_iter = 20
trace_iter = 5

[verify]
suite_size = 4
gauss_points = 2
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn wildmhd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wildmhd")).args(args).output().unwrap()
}

#[test]
fn build_writes_deterministic_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = wildmhd(&["--config", &cfg, "--out", out.to_str().unwrap(), "--quiet", "build"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["fields.csv", "initial.csv", "deficit.csv", "provenance.json", "solution.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let fields = fs::read_to_string(a.join(FIELDS)).unwrap();
    let mut lines = fields.lines();
    assert!(lines.next().unwrap().starts_with("# grid nt=8 nx=8 ny=8"));
    assert_eq!(lines.next().unwrap(), "t,x,y,rho,p,u,v,b");
    assert_eq!(lines.count(), 512);
}

#[test]
fn provenance_records_the_piece_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    assert!(wildmhd(&["--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3", "--quiet", "build"]).status.success());
    let prov: Provenance = serde_json::from_str(&fs::read_to_string(out.join(PROVENANCE)).unwrap()).unwrap();
    let parsed = config::parse(TINY).unwrap();
    let lambda = choose_lambda(&parsed.data, 1.0).unwrap();
    assert_eq!(prov.seed, 3);
    assert_eq!(prov.lambda, lambda);
    assert_eq!(prov.c, compute_c_constants(&parsed.data, lambda).unwrap());
    assert_eq!(prov.pieces.len(), 2);
}

#[test]
fn verify_reports_and_zero_tolerance_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = wildmhd(&["--config", &cfg, "--out", out.to_str().unwrap(), "--tol", "0", "verify"]);
    assert_eq!(o.status.code(), Some(3));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(report.lines().count(), 8);
    assert!(report.lines().all(|l| l.split_whitespace().count() >= 5));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["results"].as_array().unwrap().len(), 8);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let text = format!("{TINY}\n[physics]\nmargin = 0.0\n");
    let line = text.lines().position(|l| l.starts_with("margin")).unwrap() + 1;
    let cfg = write_config(dir.path(), &text);
    let o = wildmhd(&["--config", &cfg, "--out", out, "build"]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains(&format!("line {line}:")) && stderr.contains("inadmissible"), "{stderr}");

    let cfg = write_config(dir.path(), &TINY.replace("max_iter", "max_iterations"));
    assert_eq!(wildmhd(&["--config", &cfg, "--out", out, "build"]).status.code(), Some(2));

    let o = wildmhd(&["--config", "/nonexistent/run.toml", "build"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn isentropic_needs_the_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = wildmhd(&["--config", &cfg, "--out", out.to_str().unwrap(), "isentropic"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pressure law"));
}

#[test]
fn waveless_runs_are_not_distinct() {
    // pieces four cells wide admit no wave, so every seed gives u = 0
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = wildmhd(&["--config", &cfg, "--out", out.to_str().unwrap(), "--tol", "1e3", "--quiet", "compare", "--seeds", "1,2"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn compare_checks_its_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(wildmhd(&["--config", &cfg, "--out", out, "compare", "--seeds", "4"]).status.code(), Some(2));
    assert_eq!(wildmhd(&["--config", &cfg, "--out", out, "compare", "--seeds", "4,5,4"]).status.code(), Some(3));
}

#[test]
fn compare_writes_a_symmetric_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("nx = 8", "nx = 16").replace("ny = 8", "ny = 16"));
    let out = dir.path().join("out");
    let o = wildmhd(&["--config", &cfg, "--out", out.to_str().unwrap(), "--tol", "1e3", "--quiet", "compare", "--seeds", "1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("compare.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2], "0");
    assert_eq!(rows[0][3], rows[1][2]);
    assert!(rows[0][3].parse::<f64>().unwrap() > 0.0);
}
