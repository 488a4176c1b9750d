use std::path::{Path, PathBuf};
use std::process::Command;

const SMALL: &str = r#"
[run]
mode = "verify"

[problem]
bc0 = [0.0, 1.0]
bc1 = [0.0, 1.0]
T = 0.4
tau = 0.2
s = 1.6
u0 = "cos(pi*x)"

[knobs]
n_eig = 20
n_gen = 40
control_steps = 400
sim_cells = 200
sim_steps = 400
"#;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("flatctl-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn flatctl(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_flatctl")).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn with_config(dir: &Path, text: &str, mode: &str) -> i32 {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.join("out");
    flatctl(&[mode, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn report(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("out").join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn unknown_mode_exits_one() {
    assert_eq!(flatctl(&["bogus"]), 1);
    assert_eq!(flatctl(&["verify", "--no-such-flag"]), 1);
    assert_eq!(flatctl(&["--help"]), 0);
}

#[test]
fn schema_error_exits_one_with_report() {
    let d = scratch("schema");
    assert_eq!(with_config(&d, &SMALL.replace("s = 1.6", "s = 2.5"), "verify"), 1);
    let r = report(&d);
    assert_eq!(r["status"], "schema");
    assert!(r["error"].as_str().unwrap().contains("line"));
}

#[test]
fn validate_accepts_the_degenerate_demo() {
    let d = scratch("validate");
    let text = flatctl::demos::demo_config("degenerate-sqrt").unwrap();
    assert_eq!(with_config(&d, text, "validate"), 0);
    assert_eq!(report(&d)["admissible"], true);
}

#[test]
fn inadmissible_problem_exits_two() {
    let d = scratch("inadmissible");
    let text = SMALL.replace("[problem]\n", "[problem]\nrho = \"x - 0.5\"\n");
    assert_eq!(with_config(&d, &text, "synthesize"), 2);
    let r = report(&d);
    assert_eq!(r["stage"], "validate");
    assert!(r["error"].is_string());
}

#[test]
fn threshold_failure_exits_three() {
    let d = scratch("threshold");
    let text = format!("{SMALL}\n[verify]\nthreshold = 1e-300\n");
    assert_eq!(with_config(&d, &text, "verify"), 3);
    let r = report(&d);
    assert_eq!(r["status"], "threshold");
    assert!(r["final_norm_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn eigs_and_genfun_write_tables() {
    let d = scratch("tables");
    assert_eq!(with_config(&d, SMALL, "eigs"), 0);
    let eig = std::fs::read_to_string(d.join("out/eigen.csv")).unwrap();
    assert!(eig.starts_with("n,lambda,zeta\n"));
    assert_eq!(eig.lines().count(), 21);
    assert_eq!(with_config(&d, SMALL, "genfun"), 0);
    let g = std::fs::read_to_string(d.join("out/genfun.csv")).unwrap();
    let row: Vec<f64> = g.lines().nth(2).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row[0], 1.0);
    assert!((row[1] - 0.5).abs() < 1e-12);
}

#[test]
fn neumann_demo_writes_artifacts() {
    let d = scratch("demo");
    let out = d.join("out");
    assert_eq!(flatctl(&["demo", "--name", "neumann-constant", "--out", out.to_str().unwrap()]), 0);
    for f in ["h.csv", "trajectory.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = report(&d);
    assert_eq!(r["demo"], "neumann-constant");
    assert!(r["final_norm_ratio"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn artifacts_are_deterministic() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    assert_eq!(with_config(&a, SMALL, "simulate"), 0);
    assert_eq!(with_config(&b, SMALL, "simulate"), 0);
    for f in ["h.csv", "trajectory.csv", "sim.csv"] {
        let x = std::fs::read(a.join("out").join(f)).unwrap();
        let y = std::fs::read(b.join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}
