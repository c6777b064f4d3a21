use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equilens"))
        .args(args)
        .current_dir(dir)
        .env_remove("EQUILENS_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("selftest"));
    assert_eq!(run(dir.path(), &["knn", "--help"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["knn", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["knn", "--train", "a.csv", "--target", "y", "--k", "0..3"]).status.code(), Some(1));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["project", "--in", "nowhere.csv", "--kind", "sort"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

#[test]
fn malformed_inputs_report_their_location() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "id,v0,v1\n0,1,2\n1,3,oops\n").unwrap();
    let o = run(dir.path(), &["project", "--in", "bad.csv", "--kind", "sort"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("bad.csv") && msg.contains("line 3"), "{msg}");

    std::fs::write(dir.path().join("bad.json"), "{\n  \"header\": 3,\n").unwrap();
    let o = run(dir.path(), &["train", "--data", "bad.json"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("bad.json") && msg.contains("line"), "{msg}");
}

#[test]
fn group_must_match_latent_dimension() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("z.csv"), "id,v0,v1\n0,1,2\n1,3,4\n").unwrap();
    let o = run(dir.path(), &["dist", "--in", "z.csv", "--group", "sym:3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sym:3"), "{}", stderr(&o));
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--count", "60", "--out", "graphs.json"]);
    ok(d, &["train", "--data", "graphs.json", "--epochs", "5", "--out", "params.json"]);
    ok(d, &["embed", "--params", "params.json", "--data", "graphs.json", "--out", "latents.csv"]);
    ok(d, &["project", "--in", "latents.csv", "--kind", "sort", "--out", "invariant.csv"]);
    let knn = ok(d, &["knn", "--train", "invariant.csv", "--target", "target", "--k", "1..3"]);
    assert_eq!(knn.lines().count(), 3);
    ok(d, &["pca", "--in", "invariant.csv", "--color-by", "class", "--out", "scatter.svg"]);

    for f in ["graphs.json", "params.json", "params.curve.csv", "latents.csv", "invariant.csv", "metrics.csv", "scatter.svg", "scatter.csv"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    for f in ["graphs.json", "params.json", "latents.csv", "invariant.csv", "metrics.csv", "scatter.svg"] {
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join(format!("{f}.manifest.json"))).unwrap()).unwrap();
        assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o["path"] == f), "{f}");
    }
    let curve = std::fs::read_to_string(d.join("params.curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,loss,recon,kl\n"));
    assert_eq!(curve.lines().count(), 6);
    let svg = std::fs::read_to_string(d.join("scatter.svg")).unwrap();
    assert_eq!(svg.matches(r#"r="3""#).count(), 60);
}

#[test]
fn config_files_replace_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("config.json"),
        r#"{"learning_rate": 0.001, "batch_size": 8, "epochs": 2, "seed": 1, "hidden": 4}"#,
    )
    .unwrap();
    ok(d, &["gen-data", "--count", "16", "--n", "5", "--out", "g.json"]);
    ok(d, &["train", "--data", "g.json", "--config", "config.json", "--curve", "c.csv"]);
    assert_eq!(std::fs::read_to_string(d.join("c.csv")).unwrap().lines().count(), 3);
}

#[test]
fn failing_selftest_check_is_an_internal_error_but_unknown_ids_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["selftest", "--check", "9"]);
    assert_eq!(o.status.code(), Some(1));
    let out = ok(dir.path(), &["selftest", "--check", "3"]);
    assert!(out.starts_with("PASS [ 3]"), "{out}");
}
