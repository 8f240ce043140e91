use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cogsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogsim"))
        .args(args)
        .env_remove("COGSIM_SEED")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = cogsim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn check_schema(name: &str, doc: &Value) {
    let path = root().join("docs/schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

#[test]
fn map_reference_example_picks_temporal() {
    let v = ok_json(&["map", "--k", "210", "--d", "1024", "--N", "32", "--M", "512"]);
    assert_eq!(v["mode"], "temporal");
    assert_eq!(v["parallel_convs"], 32);
    check_schema("map", &v);
}

#[test]
fn roofline_row_at_1024() {
    let out = cogsim(&["roofline", "--d-range", "1024:1024:1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("d,ai_bs,ai_gemv"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(row[0], 1024.0);
    assert!((row[1] - 682.33).abs() < 0.01, "{row:?}");
    assert!((row[2] - 1.995).abs() < 0.001, "{row:?}");
    assert_eq!(lines.next(), None);
}

#[test]
fn roofline_default_range_has_64_rows() {
    let out = cogsim(&["roofline"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 65);
}

#[test]
fn single_factor_is_always_recovered() {
    let v = ok_json(&["factorize", "--factors", "1", "--codes", "8", "--dim", "256", "--trials", "50", "--flip", "0"]);
    assert_eq!(v["summary"]["accuracy"], 1.0);
    assert_eq!(v["summary"]["trials"], 50);
    check_schema("factorize", &v);
}

#[test]
fn factorize_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("records.csv");
    ok_json(&["factorize", "--factors", "2", "--codes", "4", "--dim", "256", "--trials", "7", "--records", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn seed_env_and_flag_agree_and_runs_repeat() {
    let args = ["factorize", "--factors", "3", "--codes", "6", "--dim", "256", "--trials", "20", "--flip", "0.3"];
    let a = cogsim(&args);
    let b = cogsim(&args);
    assert_eq!(a.stdout, b.stdout);

    let flag = ok_json(&[&args[..], &["--seed", "99"]].concat());
    let env = Command::new(env!("CARGO_BIN_EXE_cogsim")).args(args).env("COGSIM_SEED", "99").output().unwrap();
    let env: Value = serde_json::from_slice(&env.stdout).unwrap();
    assert_eq!(flag, env);
    assert_eq!(flag["seed"], 99);
}

#[test]
fn simulate_builtin_with_shipped_config() {
    let cfg = root().join("configs/cogsys-default.json");
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let v = ok_json(&[
        "simulate",
        "--builtin",
        "mimonet_like",
        "--config",
        cfg.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    check_schema("simulate", &v);
    let r = &v["report"];
    let kernels: u64 = r["per_kernel"].as_object().unwrap().values().map(|x| x.as_u64().unwrap()).sum();
    assert_eq!(kernels, r["total_cycles"].as_u64().unwrap());
    let header = std::fs::read_to_string(trace).unwrap();
    assert!(header.starts_with("cycle,cell,column,pe,mode"));
}

#[test]
fn shipped_config_matches_defaults_and_schema() {
    let text = std::fs::read_to_string(root().join("configs/cogsys-default.json")).unwrap();
    let shipped: cogsim_core::ArrayConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(shipped, cogsim_core::ArrayConfig::default());
    check_schema("config", &serde_json::from_str(&text).unwrap());
}

#[test]
fn schedule_with_baseline_and_gantt() {
    let dir = tempfile::tempdir().unwrap();
    let gantt = dir.path().join("gantt.csv");
    let v = ok_json(&[
        "schedule",
        "--builtin",
        "nvsa_like",
        "--batches",
        "2",
        "--baseline",
        "sequential",
        "--gantt",
        gantt.to_str().unwrap(),
    ]);
    check_schema("schedule", &v);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
    let ratio = v["baseline"]["ratio"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio <= 1.0, "{ratio}");
    let rows = std::fs::read_to_string(gantt).unwrap();
    assert_eq!(rows.lines().next(), Some("op,cells,start,end"));
    assert_eq!(rows.lines().count(), v["entries"].as_array().unwrap().len() + 1);
}

#[test]
fn shipped_workload_file() {
    let path = root().join("workloads/small.json");
    let v = ok_json(&["schedule", "--workload", path.to_str().unwrap(), "--baseline", "sequential"]);
    check_schema("schedule", &v);
    assert_eq!(v["workload"], "small");
    // 2 batches of (5 ops + 10 unrolled unbind iterations + 1)
    assert_eq!(v["entries"].as_array().unwrap().len(), 32);
    assert!(v["baseline"]["ratio"].as_f64().unwrap() < 1.0);

    let v = ok_json(&["simulate", "--workload", path.to_str().unwrap(), "--precision", "fp32"]);
    check_schema("simulate", &v);
}

#[test]
fn bad_workload_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    std::fs::write(
        &path,
        r#"{"name":"w","binding_model":"circular","precision":"int8","batches":1,
            "tasks":[{"ops":[{"id":"a","kind":"circconv","dims":{"k":4,"d":-8}}]}]}"#,
    )
    .unwrap();
    let out = cogsim(&["schedule", "--workload", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(".d"), "{}", stderr(&out));
}

#[test]
fn report_merges_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("map.json");
    let f = dir.path().join("fact.json");
    for args in [
        vec!["map", "--k", "4", "--d", "256", "--N", "8", "--M", "32", "--out", m.to_str().unwrap()],
        vec!["factorize", "--factors", "1", "--dim", "128", "--trials", "3", "--out", f.to_str().unwrap()],
    ] {
        assert!(cogsim(&args).status.success());
    }
    let v = ok_json(&["report", m.to_str().unwrap(), f.to_str().unwrap()]);
    check_schema("report", &v);
    assert_eq!(v["sources"].as_object().unwrap().len(), 2);
    assert_eq!(v["summary"][f.to_str().unwrap()]["accuracy"], 1.0);
}

#[test]
fn validation_errors_exit_1_and_name_the_token() {
    let out = cogsim(&["map", "--k", "4", "--d", "256", "--N", "8", "--M", "32", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--bogus"));

    let out = cogsim(&["roofline", "--d-range", "64:x:1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`x`"), "{}", stderr(&out));

    let out = cogsim(&["simulate", "--workload", "/no/such/file.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/no/such/file.json"));

    let out = cogsim(&["simulate", "--builtin", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope"));

    let out = cogsim(&["factorize", "--precision", "fp16"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("fp16"));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"num_arrays\": 32,\n  \"pes_per_array\": oops\n}").unwrap();
    let out = cogsim(&["simulate", "--builtin", "nvsa_like", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn capacity_errors_exit_2() {
    let text = std::fs::read_to_string(root().join("configs/cogsys-default.json")).unwrap();
    let mut cfg: Value = serde_json::from_str(&text).unwrap();
    cfg["sram_a_bytes"] = 1024.into();
    cfg["sram_b_bytes"] = 1024.into();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    for cmd in ["simulate", "schedule"] {
        let out = cogsim(&[cmd, "--builtin", "nvsa_like", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{cmd}: {}", stderr(&out));
    }
}

#[test]
fn help_exits_0() {
    assert_eq!(cogsim(&["--help"]).status.code(), Some(0));
}
