use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hjlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_with(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    hjlab(&args)
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

/// Every output file except the manifest (which records timings and cache use).
fn outputs(out: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

const PROP43_CAUCHY: &str = "spec = \"prop43_cauchy\"\neps = [0.1]\nt = [1.0]\n";

#[test]
fn solve_cauchy_lower_bound_and_cache() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", PROP43_CAUCHY);
    let out = dir.path().join("out");

    let first = run_with("solve-cauchy", &cfg, &out, &[]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(manifest(&out)["cache"], "miss");
    let rows = csv_rows(&out.join("u_eps_0.1_t_1.csv"));
    let at_origin: Vec<f64> = rows.iter().filter(|r| r[0] == 0.0 && r[1] == 1.0).map(|r| r[2]).collect();
    assert_eq!(at_origin.len(), 1);
    // u^ε(0, 1) ≥ εt/2
    assert!(at_origin[0] >= 0.05 - 1e-9, "{}", at_origin[0]);
    let fresh = outputs(&out);
    assert!(fresh.contains_key("u_bar_t_1.csv") && fresh.contains_key("solution.json"));

    let again = run_with("solve-cauchy", &cfg, &out, &[]);
    assert_eq!(code(&again), 0);
    assert!(stdout(&again).contains("cache Hit"));
    let m = manifest(&out);
    assert_eq!(m["cache"], "hit");
    assert_eq!(outputs(&out), fresh);
    for key in ["config_hash", "tolerances", "timings", "outputs"] {
        assert!(!m[key].is_null(), "manifest lacks {key}");
    }

    let recomputed = run_with("solve-cauchy", &cfg, &out, &["--no-cache"]);
    assert_eq!(code(&recomputed), 0);
    assert_eq!(manifest(&out)["cache"], "disabled");
    assert_eq!(outputs(&out), fresh);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "spec = \"prop41\"\neps = [0.2]\nt = [0.5]\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_with("solve-cauchy", &cfg, &a, &["--workers", "1"])), 0);
    assert_eq!(code(&run_with("solve-cauchy", &cfg, &b, &["--workers", "3"])), 0);
    assert_eq!(outputs(&a), outputs(&b));
}

#[test]
fn solve_static_writes_fields() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "s.toml", "spec = \"prop43_static\"\neps = [0.2]\nlambda = [0.5]\n");
    let out = dir.path().join("out");
    let o = run_with("solve-static", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("u_eps_0.2_lambda_0.5.csv")).unwrap();
    assert!(text.starts_with("x,lambda,value\n"));
    let rows = csv_rows(&out.join("u_eps_0.2_lambda_0.5.csv"));
    let origin = rows.iter().find(|r| r[0] == 0.0).unwrap()[2];
    // u^ε(0) ≥ ε/(2λ) and |u^ε| ≤ max|H(·,·,0)|/λ
    assert!(origin >= 0.2 - 1e-9, "{origin}");
    assert!(rows.iter().all(|r| r[2].abs() <= 1.5 / 0.5 + 1e-9));
}

#[test]
fn effective_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "e.toml",
        "spec = \"prop42\"\n[effective]\np_eval = [0.6666666666666666, 1.2189514]\n",
    );
    let out = dir.path().join("p42");
    let o = run_with("effective", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("effective.json")).unwrap()).unwrap();
    let values = report["values"].as_array().unwrap();
    assert!(values[0]["hbar"].as_f64().unwrap().abs() < 1e-12);
    assert!((values[1]["hbar"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(std::fs::read_to_string(out.join("hbar.csv")).unwrap().starts_with("p_or_v,value\n"));
    assert!(std::fs::read_to_string(out.join("lbar.csv")).unwrap().starts_with("p_or_v,value\n"));

    let cfg = write_config(&dir, "f.toml", "spec = \"free\"\n");
    let out = dir.path().join("free");
    assert_eq!(code(&run_with("effective", &cfg, &out, &[])), 0);
    for r in csv_rows(&out.join("hbar.csv")) {
        assert!((r[1] - 0.5 * r[0] * r[0]).abs() < 1e-9, "{r:?}");
    }
    for r in csv_rows(&out.join("lbar.csv")) {
        assert!((r[1] - 0.5 * r[0] * r[0]).abs() < 1e-4, "{r:?}");
    }
}

#[test]
fn metric_queries_and_audit() {
    let dir = TempDir::new().unwrap();
    let text = r#"
spec = "free"
eps = [0.5]

[[metric.queries]]
kind = "m_eps"
t1 = 0.0
t2 = 2.0
x = -0.5
y = 1.0
eps = 0.5

[metric.audit]
points = 3
radius = 0.25
t = 1.0
"#;
    let cfg = write_config(&dir, "m.toml", text);
    let out = dir.path().join("out");
    let o = run_with("metric", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metric.json")).unwrap()).unwrap();
    let value = m["queries"][0]["value"].as_f64().unwrap();
    assert!((value - 1.5 * 1.5 / 4.0).abs() < 1e-3, "{value}");
    assert_eq!(m["audit"]["violations"], 0);
    assert_eq!(m["verdicts"][0]["status"], "pass");
    let curve = std::fs::read_to_string(out.join("curve_0.csv")).unwrap();
    assert!(curve.starts_with("t,x\n0,-0.5\n"));
}

#[test]
fn metric_lemma_report() {
    let dir = TempDir::new().unwrap();
    let text = r#"
spec = "prop43_cauchy"
eps = [0.2, 0.1]

[grid]
points_per_period = 128.0
dt_over_h = 16.0

[metric.lemma]
c = 0.5
t = 1.0
x = 0.0
y = 0.22857142857142856
constant = 1.0
"#;
    let cfg = write_config(&dir, "l.toml", text);
    let out = dir.path().join("out");
    let o = run_with("metric", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metric.json")).unwrap()).unwrap();
    for row in m["lemma"].as_array().unwrap() {
        let ratio = row["ratio"].as_f64().unwrap();
        assert!(ratio > 0.0 && ratio < 0.1, "{row}");
    }
}

#[test]
fn rates_prop43_passes_and_plots() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "r.toml",
        "spec = \"prop43_cauchy\"\neps = [0.2, 0.1, 0.05, 0.025]\nt = [1.0]\n",
    );
    let out = dir.path().join("out");
    let o = run_with("rates", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("rates_cauchy.json")).unwrap()).unwrap();
    for key in ["spec", "regime", "cells", "fit", "verdicts"] {
        assert!(!report[key].is_null(), "report lacks {key}");
    }
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
    assert_eq!(report["verdicts"][0]["status"], "pass");
    let svg = std::fs::read_to_string(out.join("rates_cauchy.svg")).unwrap();
    let hash = manifest(&out)["config_hash"].as_str().unwrap().to_string();
    assert!(svg.contains(&hash));
    assert!(svg.contains("stroke-dasharray"));
    let csv = std::fs::read_to_string(out.join("rates_cauchy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn rates_prop42_fails_as_expected() {
    let dir = TempDir::new().unwrap();
    let text = r#"
spec = "prop42"
eps = [0.25, 0.0625, 0.015625, 0.00390625, 0.0009765625]
t = [1.0]

[grid]
speed_bound = 2.0
report_radius = 0.0

[tolerances]
cross_check = false
refine = false
"#;
    let cfg = write_config(&dir, "r.toml", text);
    let out = dir.path().join("out");
    let o = run_with("rates", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("rates_cauchy.json")).unwrap()).unwrap();
    assert_eq!(report["verdicts"][0]["status"], "fail");
    assert_eq!(report["verdicts"][0]["expected"], "fail");
}

#[test]
fn verify_all_fast_checks_pass() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.toml", "[verify]\nchecks = [\"AC-1\", \"AC-2\"]\n");
    let o = run_with("verify-all", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("AC-1   PASS") && s.contains("AC-2   PASS"), "{s}");
}

#[test]
fn tampered_tolerance_names_the_failing_check() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "v.toml",
        "[verify]\nchecks = [\"AC-2\"]\ncell_check_tol = 1e-9\n",
    );
    let o = run_with("verify-all", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("AC-2   FAIL"));
    assert!(stderr(&o).contains("FAIL ac2/prop43_cauchy"), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");

    let empty_eps = write_config(&dir, "a.toml", "spec = \"prop43_cauchy\"\neps = []\nt = [1.0]\n");
    let o = run_with("rates", &empty_eps, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`eps`"), "{}", stderr(&o));

    let no_spec = write_config(&dir, "b.toml", "eps = [0.1]\nt = [1.0]\n");
    let o = run_with("solve-cauchy", &no_spec, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`spec`"));

    let unknown = write_config(&dir, "c.toml", "spec = \"prop44\"\neps = [0.1]\nt = [1.0]\n");
    let o = run_with("solve-cauchy", &unknown, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("prop44"));

    let coarse = write_config(&dir, "d.toml", "spec = \"free\"\neps = [0.1]\nt = [1.0]\n[grid]\npoints_per_period = 8.0\n");
    let o = run_with("solve-cauchy", &coarse, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("grid.points_per_period"));

    let typo = write_config(&dir, "e.toml", "spec = \"free\"\n\n[tolerances]\nbnad = 2.0\n");
    let o = run_with("rates", &typo, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let wrong_target = write_config(&dir, "f.toml", "target = \"metric\"\n");
    let o = run_with("rates", &wrong_target, &out, &[]);
    assert_eq!(code(&o), 2);

    let o = hjlab(&["rates", "--bogus"]);
    assert_eq!(code(&o), 2);
    let o = hjlab(&["verify-all", "--config", "/nonexistent/x.toml"]);
    assert_eq!(code(&o), 2);
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn numerical_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    // minimizers need speed 3, the bound allows 0.25
    let problem = "[problem]\nname = \"steep\"\nmacro_potential = { kind = \"zero\" }\nmicro_potential = { kind = \"zero\" }\ninitial_data = { kind = \"abs\", slope = 3.0 }\n";
    let grid = "[grid]\nspeed_bound = 0.25\n\n";
    let cfg = write_config(&dir, "n.toml", &format!("eps = [0.5]\nt = [1.0]\n{grid}{problem}"));
    let o = run_with("solve-cauchy", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 3, "{}\n{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("speed bound"));

    let both = write_config(&dir, "b.toml", &format!("spec = \"free\"\neps = [0.5]\nt = [1.0]\n{problem}"));
    let o = run_with("solve-cauchy", &both, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn tol_scale_flag_changes_the_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "spec = \"free\"\neps = [0.5]\nt = [0.5]\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_with("solve-cauchy", &cfg, &a, &[])), 0);
    assert_eq!(code(&run_with("solve-cauchy", &cfg, &b, &["--tol-scale", "2"])), 0);
    assert_ne!(manifest(&a)["config_hash"], manifest(&b)["config_hash"]);
    assert_eq!(manifest(&b)["tolerances"]["tol_scale"], 2.0);
}
