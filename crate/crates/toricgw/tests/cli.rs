//! End-to-end checks of the `toricgw` binary against the shipped job files.

use std::path::PathBuf;
use std::process::{Command, Output};

fn job(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("jobs").join(name)
}

fn toricgw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toricgw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn integrate_prints_exact_results() {
    for (file, expect) in [
        ("p2_lines.json", "RESULT 1/1"),
        ("blowup_point.json", "RESULT 1/1"),
        ("quartic_tangency.json", "RESULT 2/1"),
        ("threefold_spielberg.json", "RESULT -1/1"),
        ("fourfold_twisted_psi.json", "RESULT -120/1"),
        ("fourfold_twisted_c4.json", "RESULT 27/1"),
    ] {
        let out = toricgw(&["integrate", "--job", job(file).to_str().unwrap()]);
        assert!(out.status.success(), "{file}: {}", stderr(&out));
        assert_eq!(stdout(&out).trim(), expect, "{file}");
    }
}

#[test]
fn integrate_with_verify_seed_and_workers() {
    let path = job("p2_lines.json");
    let out = toricgw(&[
        "integrate",
        "--job",
        path.to_str().unwrap(),
        "--seed",
        "31415",
        "--workers",
        "2",
        "--verify",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "RESULT 1/1");
}

#[test]
fn conics_job_agrees_across_worker_counts() {
    let path = job("p3_conics.json");
    let mut results = Vec::new();
    for workers in ["1", "4"] {
        let out = toricgw(&[
            "integrate",
            "--job",
            path.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        results.push(stdout(&out).trim().to_owned());
    }
    assert_eq!(results[0], "RESULT 1/1");
    assert_eq!(results[0], results[1]);
}

#[test]
fn moment_graph_and_nef_verbs() {
    let path = job("p2_lines.json");
    let out = toricgw(&["moment-graph", "--job", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("CONE").count(), 3);
    assert_eq!(text.matches("mg[").count(), 3);
    assert!(text.contains("mg[1,2] = [1, 1, 1]"));

    let out = toricgw(&["nef", "--job", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("NEF").count(), 1);
    assert!(text.contains("pairings [1]"));
}

#[test]
fn graphs_verb_counts() {
    let path = job("p2_lines.json");
    let out = toricgw(&["graphs", "--job", path.to_str().unwrap(), "--count"]);
    assert!(out.status.success());
    // (P2, line, m=2): 3 coloring orbits x 4 markings.
    assert_eq!(stdout(&out).trim(), "GRAPHS 12");

    let out = toricgw(&["graphs", "--job", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("GRAPH ").count(), 12);
}

#[test]
fn dimension_mismatch_warns_and_returns_zero() {
    let dir = std::env::temp_dir().join("toricgw-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("mismatch.json");
    std::fs::write(
        &path,
        r#"{
            "fan": {"construct": "projective_space", "args": [3]},
            "beta": "mg[1,2]",
            "m": 0,
            "integrand": "1"
        }"#,
    )
    .unwrap();
    let out = toricgw(&["integrate", "--job", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "RESULT 0/1");
    assert!(stderr(&out).contains("WARNING DimensionMismatch"));
}

#[test]
fn errors_name_their_kind_and_fail() {
    let dir = std::env::temp_dir().join("toricgw-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();

    let bad_beta = dir.join("bad_beta.json");
    std::fs::write(
        &bad_beta,
        r#"{
            "fan": {"construct": "projective_space", "args": [3]},
            "beta": [-1, -1, -1, -1],
            "m": 0,
            "integrand": "1"
        }"#,
    )
    .unwrap();
    let out = toricgw(&["integrate", "--job", bad_beta.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ERROR NotEffective"));

    let bad_fan = dir.join("bad_fan.json");
    std::fs::write(
        &bad_fan,
        r#"{
            "fan": {"rays": [[1,0],[0,1],[-1,-2]], "max_cones": [[1,2],[2,3],[1,3]]},
            "beta": [1,1,1],
            "m": 0,
            "integrand": "1"
        }"#,
    )
    .unwrap();
    let out = toricgw(&["integrate", "--job", bad_fan.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ERROR NonSmoothCone"));

    let out = toricgw(&["integrate", "--job", "/nonexistent/path.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ERROR IoError"));
}
