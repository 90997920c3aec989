use std::process::Command;

fn mabi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mabi"))
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mabi()
        .args(["simulate", "--T", "6", "--instances", "2", "--reps", "3", "--policy", "sb,cr,fixed-arm", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "runs.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.starts_with("policy,T,N,"));
    assert_eq!(results.lines().count(), 4);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 3\nhorizons = [5]\ninstances = 2\nreps = 2\npolicies = [\"cr\"]\nn_rule = 16\n",
    )
    .unwrap();
    let out = mabi()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--reps", "4", "--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(dir.path().join("o/results.csv")).unwrap();
    let row: Vec<&str> = results.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..5], ["exp3-ht-ix", "5", "16", "2", "4"]);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "unknown_key = 1\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--config".into(), bad.display().to_string()],
        vec!["simulate".into(), "--config".into(), dir.path().join("missing.toml").display().to_string()],
        vec!["simulate".into(), "--N-rule".into(), "t4".into()],
        vec!["simulate".into(), "--policy".into(), "greedy".into()],
        vec!["reproduce-fig".into(), "--figure".into(), "n-eq-t2".into(), "--scale".into(), "3".into()],
        vec!["validate".into(), "--suite".into(), "nope".into()],
        vec!["no-such-command".into()],
    ];
    for args in cases {
        let out = mabi().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn validate_suite_passes() {
    let out = mabi().args(["validate", "--suite", "geometry"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("geometry"));
}

#[test]
fn shipped_config_parses() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let config = mabi::harness::RunConfig::load(&path).unwrap();
    assert_eq!(config, mabi::harness::RunConfig { out: "out/desk".into(), ..Default::default() });
}
