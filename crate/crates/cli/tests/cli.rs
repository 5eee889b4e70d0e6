//! End-to-end tests of the `netbayes` binary: happy paths, exit-code
//! contract, and fault injection against the verifier.

use std::path::Path;
use std::process::{Command, Output};

use netbayes::graph::Graph;

fn netbayes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netbayes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

#[test]
fn simulate_clique_summary() {
    let out = netbayes(&["simulate", "--family", "clique", "--n", "8"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("t_last_change=1"), "{text}");
    assert!(text.contains("final tau_sq=1/8"), "{text}");
}

#[test]
fn simulate_path_three() {
    let out = netbayes(&["simulate", "--family", "path", "--n", "3"]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("t_last_change=2"));
}

#[test]
fn simulate_rejects_disconnected_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.edges");
    std::fs::write(&path, "4 2\n0 1\n2 3\n").unwrap();
    let out = netbayes(&["simulate", "--graph", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn simulate_requires_a_graph_source() {
    let out = netbayes(&["simulate", "--backend", "float"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn graph_gen_three_regular() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r12.edges");
    let out = netbayes(&[
        "graph-gen",
        "--family",
        "regular_random",
        "--n",
        "12",
        "--degree",
        "3",
        "--seed",
        "7",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let g = Graph::read_edge_list(&path).unwrap();
    assert!(g.validate().is_empty());
    assert!((0..12).all(|v| g.degree(v) == 3));
}

#[test]
fn graph_gen_star() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("star.edges");
    let out = netbayes(&[
        "graph-gen", "--family", "star", "--n", "5", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "5 4\n0 1\n0 2\n0 3\n0 4\n");
}

#[test]
fn graph_gen_rejects_odd_stub_count() {
    let out = netbayes(&[
        "graph-gen",
        "--family",
        "regular_random",
        "--n",
        "5",
        "--degree",
        "3",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(exit_code(&out), 2);
}

fn write_trace(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("k4.json");
    let out = netbayes(&[
        "simulate", "--family", "clique", "--n", "4", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    path
}

#[test]
fn verify_accepts_fresh_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_trace(dir.path());
    let out = netbayes(&["verify", "--trace", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("PASS limit_uniform"));
    assert!(text.contains("PASS oracle_equivalence"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn verify_flags_corrupted_coefficient_sum() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_trace(dir.path());
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["rounds"][1]["agents"][0]["beta"][0] = serde_json::json!("3/7");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = netbayes(&["verify", "--trace", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stdout(&out).contains("FAIL unbiasedness"));
}

#[test]
fn verify_flags_forged_convergence_round() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_trace(dir.path());
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["t_last_change"] = serde_json::json!(9999);
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = netbayes(&["verify", "--trace", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("FAIL bound_2nd"), "{text}");
    assert!(text.contains("FAIL change_log_consistent"), "{text}");
}

#[test]
fn generated_graph_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("btree.edges");
    let gen = netbayes(&[
        "graph-gen", "--family", "btree", "--n", "7", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&gen), 0);
    let from_file = netbayes(&["simulate", "--graph", path.to_str().unwrap()]);
    let from_family = netbayes(&["simulate", "--family", "btree", "--n", "7"]);
    assert_eq!(exit_code(&from_file), 0);
    assert_eq!(stdout(&from_file), stdout(&from_family));
}

#[test]
fn sweep_writes_deterministic_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let args = [
        "sweep",
        "--family",
        "clique",
        "--n",
        "2,4,8",
        "--seeds",
        "2",
        "--out",
        csv.to_str().unwrap(),
        "--deterministic",
    ];
    let first = netbayes(&args);
    assert_eq!(exit_code(&first), 0);
    let bytes_a = std::fs::read(&csv).unwrap();
    let second = netbayes(&args);
    assert_eq!(exit_code(&second), 0);
    let bytes_b = std::fs::read(&csv).unwrap();
    assert_eq!(bytes_a, bytes_b);

    let text = String::from_utf8(bytes_a).unwrap();
    assert!(text.starts_with(
        "family,n,degree,d,d_star,seed,t_last_change,t_all_equal,bound_2nd,max_dim_step,invariants_ok\n"
    ));
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().skip(1).all(|line| line.ends_with(",true")));

    let sidecar = csv.with_extension("config.json");
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
    assert_eq!(config["family"], "clique");
    assert_eq!(config["seeds"], serde_json::json!([0, 1]));
}
