use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cachecast"))
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const COLLISION: &str = r#"
model = "collision"
schemes = ["reuse-dsatur+greedy", "avalanche"]
instances = 3
base_seed = 11
mu = 0.25
groups = 4

[layout]
region_radius_m = 400.0
"#;

const TOPOLOGICAL: &str = r#"
model = "topological"
schemes = ["multiround", "new-lp"]
instances = 2
mu = 0.5
groups = 2

[layout]
region_radius_m = 300.0
lambda_helpers_per_km2 = 20.0
lambda_users_per_km2 = 60.0
"#;

#[test]
fn generate_is_seeded_and_loadable() {
    let a = ok(bin().args(["generate", "--seed", "4", "--radius-m", "500"]).output().unwrap());
    let b = ok(bin().args(["generate", "--seed", "4", "--radius-m", "500"]).output().unwrap());
    assert_eq!(a, b);
    let layout = cachecast::scenario::Layout::from_json(&a).unwrap();
    assert_eq!(layout.region_radius_m, 500.0);
    assert_eq!(layout.to_json().unwrap() + "\n", a);
}

#[test]
fn run_writes_identical_csv_twice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COLLISION);
    let a = ok(bin().arg("run").arg(&cfg).output().unwrap());
    let b = ok(bin().arg("run").arg(&cfg).output().unwrap());
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("scheme,sweep_param,sweep_value,seed,t_seconds,t_normalized,flag"));
    assert_eq!(lines.count(), 2 * 3);
}

#[test]
fn sweep_emits_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COLLISION);
    let summary = dir.path().join("summary.json");
    let csv = ok(bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--param", "L", "--values", "4,8", "--summary"])
        .arg(&summary)
        .output()
        .unwrap());
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 3);
    assert!(csv.contains("avalanche,L,8.0,13,"));
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
    assert_eq!(rows[0]["count"], 3);

    let bad = bin().arg("sweep").arg(&cfg).args(["--param", "mu", "--values", "0.3"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn run_exports_routing_json_and_lp_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOPOLOGICAL);
    let routing = dir.path().join("routing.jsonl");
    let lp_dir = dir.path().join("lp");
    ok(bin()
        .arg("run")
        .arg(&cfg)
        .arg("--routing-json")
        .arg(&routing)
        .arg("--dump-lp")
        .arg(&lp_dir)
        .output()
        .unwrap());
    let text = std::fs::read_to_string(routing).unwrap();
    assert_eq!(text.lines().count(), 2 * 2);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["scheme", "alpha", "t_front", "t_access", "t_total", "rounds"] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
        assert!(v["t_total"].as_f64().unwrap() >= v["t_front"].as_f64().unwrap() - 1e-12);
    }
    let files: Vec<_> = std::fs::read_dir(&lp_dir).unwrap().collect();
    assert!(!files.is_empty());
    for f in files {
        let text = std::fs::read_to_string(f.unwrap().path()).unwrap();
        assert!(text.starts_with("Minimize\n") && text.ends_with("End\n"));
    }
}

#[test]
fn trace_of_example_instance() {
    let out = ok(bin().args(["trace", "--example"]).output().unwrap());
    let trace = cachecast::collision::ScheduleTrace::from_jsonl(&out).unwrap();
    assert_eq!(trace.final_slots(), 9);
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["t_slots"].is_u64() && v["event"].is_string() && v["helper"].is_u64() && v["users"].is_array());
    }
}

#[test]
fn trace_of_generated_layout() {
    let dir = tempfile::tempdir().unwrap();
    let layout_path = dir.path().join("layout.json");
    // One helper at the centre covers a disk of radius a_cell.
    let layout = ok(bin()
        .args(["generate", "--seed", "2", "--radius-m", "150", "--lambda-helpers", "0.0001"])
        .output()
        .unwrap());
    let mut parsed = cachecast::scenario::Layout::from_json(&layout).unwrap();
    parsed.helpers = vec![cachecast::scenario::Point::new(0.0, 0.0)];
    std::fs::write(&layout_path, parsed.to_json().unwrap()).unwrap();
    let out = ok(bin()
        .args(["trace", "-L", "4", "-t", "1", "--layout"])
        .arg(&layout_path)
        .output()
        .unwrap());
    let trace = cachecast::collision::ScheduleTrace::from_jsonl(&out).unwrap();
    assert!(trace.final_slots() > 0 || parsed.users.is_empty());
}
