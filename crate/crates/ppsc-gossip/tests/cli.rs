//! Contract tests for the `ppsc-gossip` binary: exit codes, error naming,
//! output formats and seed-stable output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppsc-gossip"))
}

fn workspace_path(relative: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(relative)
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A small averaging scenario used by the failure-path tests; written to a
/// temp dir so the tests can mutate it freely.
fn minimal_average_config() -> String {
    r#"
seed = 1
trials = 5

[public]
nodes = 10
weight = 0.1
shape = "cycle"

[private]
edges = [
  [0, 1], [1, 2], [2, 3], [0, 3],
  [4, 5], [5, 6], [4, 6],
  [7, 8], [8, 9],
]

[budget]
adjacency_radius = 1.0
epsilon = 1e-1
delta = 1e-6
covering_confidence = 0.99
accuracy = 1e-2

[task]
kind = "average"
data = [10.0, 100.0, 20.0, -30.0, -20.0, 60.0, 70.0, 0.0, 80.0, -20.0]
"#
    .to_string()
}

#[test]
fn help_exits_cleanly() {
    let out = binary().arg("--help").output().expect("binary runs");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for subcommand in ["plan", "ppsc", "consensus", "nle", "dco", "audit", "experiment"] {
        assert!(text.contains(subcommand), "--help does not mention {subcommand}");
    }
}

#[test]
fn unknown_subcommand_is_an_error() {
    let out = binary().arg("frobnicate").output().expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_flag_is_reported() {
    let out = binary().arg("plan").output().expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--config"), "stderr: {}", stderr(&out));
}

#[test]
fn missing_config_file_names_the_path() {
    let out = binary()
        .args(["plan", "--config", "/nonexistent/nowhere.toml"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("/nonexistent/nowhere.toml"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, format!("wat = 1\n{}", minimal_average_config()))
        .expect("config written");
    let out = binary()
        .args(["plan", "--config", path.to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("wat"), "stderr: {}", stderr(&out));
}

#[test]
fn foreign_task_field_is_named() {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("mixed.toml");
    let config = minimal_average_config()
        + "centers = [[0.1, 0.2, 0.3], [0.0, 0.1, 0.0], [0.2, 0.0, 0.1], [0.1, 0.1, 0.1], [0.0, 0.0, 0.1], [0.1, 0.0, 0.0], [0.2, 0.1, 0.0], [0.0, 0.2, 0.1], [0.1, 0.2, 0.0], [0.2, 0.2, 0.2]]\n";
    std::fs::write(&path, config).expect("config written");
    let out = binary()
        .args(["plan", "--config", path.to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("task.centers"), "stderr: {}", stderr(&out));
}

#[test]
fn plan_prints_the_derived_parameters() {
    let out = binary()
        .args(["plan", "--config"])
        .arg(workspace_path("configs/average_ring.toml"))
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for field in ["gossip steps", "averaging rounds", "noise std", "mixing floor"] {
        assert!(text.contains(field), "plan output lacks {field}: {text}");
    }
}

#[test]
fn override_below_plan_needs_force() {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("low.toml");
    let config = minimal_average_config() + "\n[overrides]\naveraging_rounds = 5\n";
    std::fs::write(&path, config).expect("config written");

    let refused = binary()
        .args(["plan", "--config", path.to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert_eq!(refused.status.code(), Some(1));
    let err = stderr(&refused);
    assert!(err.contains("below the planned bound"), "stderr: {err}");
    assert!(err.contains("--force"), "stderr: {err}");

    let forced = binary()
        .args(["plan", "--force", "--config", path.to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert_eq!(forced.status.code(), Some(0), "stderr: {}", stderr(&forced));
    assert!(
        stdout(&forced).contains("forced below the planned bound"),
        "stdout: {}",
        stdout(&forced)
    );
}

#[test]
fn consensus_writes_the_documented_csv() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out_path = dir.path().join("curve.csv");
    let out = binary()
        .args(["consensus", "--trials", "3", "--out"])
        .arg(&out_path)
        .arg("--config")
        .arg(workspace_path("configs/average_ring.toml"))
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(&out_path).expect("output file written");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,stage,mse"));
    let first = lines.next().expect("data row");
    assert!(first.starts_with("0,input,"), "first row: {first}");
    assert!(csv.contains(",gossip,") && csv.contains(",averaging,"), "stages missing");
}

#[test]
fn audit_covering_writes_the_documented_csv() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out_path = dir.path().join("covering.csv");
    let out = binary()
        .args(["audit", "covering", "--out"])
        .arg(&out_path)
        .arg("--config")
        .arg(workspace_path("configs/average_ring.toml"))
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(&out_path).expect("output file written");
    assert_eq!(csv.lines().next(), Some("S,empirical_p,analytic_lb,std_err"));
}

#[test]
fn audit_dp_reports_the_budget_check() {
    let out = binary()
        .args(["audit", "dp", "--config"])
        .arg(workspace_path("configs/average_ring.toml"))
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert_eq!(
        stdout(&out).lines().next(),
        Some("epsilon,noise_std,mixing_floor,adjacency_radius,delta_required,delta_budget")
    );
    assert!(stderr(&out).contains("within budget"), "stderr: {}", stderr(&out));
}

#[test]
fn same_seed_writes_identical_files() {
    let dir = tempfile::tempdir().expect("temp dir");
    let run = |name: &str, seed: &str| -> Vec<u8> {
        let out_path = dir.path().join(name);
        let out = binary()
            .args(["consensus", "--seed", seed, "--trials", "3", "--out"])
            .arg(&out_path)
            .arg("--config")
            .arg(workspace_path("configs/average_ring.toml"))
            .output()
            .expect("binary runs");
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        std::fs::read(&out_path).expect("output file written")
    };
    let first = run("a.csv", "9");
    let second = run("b.csv", "9");
    let other = run("c.csv", "10");
    assert_eq!(first, second, "same seed produced different bytes");
    assert_ne!(first, other, "seed is not threaded into the run");
}

#[test]
fn heavy_public_weight_warns_but_runs() {
    let out = binary()
        .args(["plan", "--config"])
        .arg(workspace_path("configs/equations_ring.toml"))
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("exceeds 1/n"), "stderr: {}", stderr(&out));
}
