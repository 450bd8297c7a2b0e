mod support;

use std::process::Command;

use support::fixture;

fn lineage(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lineage")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn validate_accepts_a_valid_file() {
    let (code, stdout, _) = lineage(&["validate", fixture("calibrate.json").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("5 models"), "{stdout}");
}

#[test]
fn validate_reports_cycles() {
    let (code, _, stderr) = lineage(&["validate", fixture("cycle.json").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("CycleDetected"), "{stderr}");
}

#[test]
fn compare_calibrate_pair() {
    let file = fixture("calibrate.json");
    let (code, stdout, stderr) = lineage(&["compare", file.to_str().unwrap(), "--select", "pruned-q,pruned-cal-q", "--metric", "accuracy"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains(r#""kind":"presence""#), "{stdout}");
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["chart"]["x_variable"]["values"], serde_json::json!(["false", "true"]));
}

#[test]
fn compare_and_layout_report_errors() {
    let file = fixture("calibrate.json");
    let f = file.to_str().unwrap();
    let (code, _, stderr) = lineage(&["compare", f, "--select", "pruned,ghost", "--metric", "accuracy"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("UnknownModel"), "{stderr}");
    let (code, _, stderr) = lineage(&["layout", f, "--color", "latency"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("UnknownMetric"), "{stderr}");
    let (code, _, _) = lineage(&["validate", "/nonexistent/file.json"]);
    assert_eq!(code, 1);
}

#[test]
fn layout_prints_json() {
    let (code, stdout, _) = lineage(&["layout", fixture("calibrate.json").to_str().unwrap(), "--mode", "by_operation"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["nodes"].as_object().unwrap().len(), 5);
}

#[test]
fn sim_writes_a_loadable_store() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("repair");
    let (code, stdout, stderr) = lineage(&["sim", "--scenario", "repair", "--seed", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("wrote 24 files"), "{stdout}");
    let (code, stdout, _) = lineage(&["validate", out.join("experiments.json").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("11 models"), "{stdout}");
    let (code, _, _) = lineage(&["sim", "--scenario", "nope", "--out", out.to_str().unwrap()]);
    assert_ne!(code, 0);
}

#[test]
fn serve_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("session.toml");
    std::fs::write(&config, "experiments = \"missing.json\"\n").unwrap();
    let (code, _, stderr) = lineage(&["serve", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("LoadFailure"), "{stderr}");
}
