use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn glad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glad")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = glad(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn toy(out: &Path, budget: &str) {
    ok(&["toy", "--budget", budget, "--resolution", "20", "--out", out.to_str().unwrap()]);
}

#[test]
fn toy_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "10");
    for f in [
        "grid_initial.csv",
        "grid_primed.csv",
        "grid_feedback.csv",
        "regions.txt",
        "regions.json",
        "trace_glad_0.csv",
        "snapshot.json",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let grid = fs::read_to_string(dir.path().join("grid_primed.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next().unwrap(), "x,y,score,p0,p1,p2,p3");
    assert_eq!(lines.count(), 400);
    let trace = fs::read_to_string(dir.path().join("trace_glad_0.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
}

#[test]
fn toy_zero_budget_grids_match() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "0");
    let primed = fs::read(dir.path().join("grid_primed.csv")).unwrap();
    let feedback = fs::read(dir.path().join("grid_feedback.csv")).unwrap();
    assert_eq!(primed, feedback);
}

#[test]
fn explain_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "10");
    let snap = dir.path().join("snapshot.json");
    let snap = snap.to_str().unwrap();

    let text = ok(&["explain", snap]);
    assert!(text.contains("member"), "{text}");
    assert!(text.contains("('"), "{text}");

    let json: serde_json::Value = serde_json::from_str(&ok(&["explain", snap, "--json"])).unwrap();
    assert_eq!(json["terms"].as_array().unwrap().len(), 2);
    assert!(json["member"].as_u64().unwrap() < 4);

    let one: serde_json::Value = serde_json::from_str(&ok(&["explain", snap, "3", "--k", "1", "--json"])).unwrap();
    assert_eq!(one["index"], 3);
    assert_eq!(one["terms"].as_array().unwrap().len(), 1);

    let bad = glad(&["explain", snap, "100000"]);
    assert_eq!(bad.status.code(), Some(2));
    let missing = glad(&["explain", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn bench_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let stdout = ok(&[
            "bench",
            "--dataset",
            "toy",
            "--projections",
            "4",
            "--budget",
            "8",
            "--seeds",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        (out.join("toy"), stdout)
    };
    let (a, sa) = run("a");
    let (b, sb) = run("b");
    assert_eq!(sa, sb);
    for m in ["glad", "loda", "loda-aad", "random"] {
        assert!(sa.contains(m), "{sa}");
        let name = format!("curves_{m}.csv");
        let curve = fs::read_to_string(a.join(&name)).unwrap();
        assert_eq!(curve.lines().count(), 9, "{name}");
        assert_eq!(curve, fs::read_to_string(b.join(&name)).unwrap());
        for seed in 0..2 {
            assert!(a.join(format!("trace_{m}_{seed}.csv")).is_file());
        }
    }
}

#[test]
fn bench_method_subset_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "bench", "--dataset", "toy", "--methods", "loda,random", "--budget", "5", "--seeds", "3-4", "--out", out,
    ]);
    let toy = dir.path().join("toy");
    assert!(toy.join("curves_loda.csv").is_file());
    assert!(!toy.join("curves_glad.csv").exists());
    assert!(toy.join("trace_random_4.csv").is_file());

    assert_eq!(glad(&["bench", "--dataset", "toy", "--tau", "0.9", "--out", out]).status.code(), Some(2));
    assert_eq!(glad(&["bench", "--dataset", "missing.csv", "--out", out]).status.code(), Some(2));
    assert_eq!(glad(&["bench", "--dataset", "toy", "--methods", "magic"]).status.code(), Some(2));
}
