//! End-to-end tests of the `toom` binary: flag parsing, config-file
//! overrides, structured errors, reproducible outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_toom"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn summary(dir: &Path, command: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join(format!("{command}_summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn spec_flag_spelling_parses_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "--p", "0.5", "--lambda-plus", "1", "--lambda-minus", "0", "--L", "512",
            "--seed", "7", "--horizon", "200", "--trials", "4",
            "--out-dir", dir.path().to_str().unwrap(),
            "drift",
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "drift");
    assert_eq!(s["config"]["params"]["ringSize"], 512);
    assert_eq!(s["config"]["seed"], 7);
    assert_eq!(s["pass"], true);
    assert!(dir.path().join("drift_trials.csv").exists());
}

#[test]
fn out_of_range_density_is_rejected_with_structured_error() {
    let out = run(&["--p", "1.2", "simulate"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().next().unwrap();
    let err: serde_json::Value = serde_json::from_str(line).expect("structured JSON error");
    assert_eq!(err["error"]["kind"], "params");
    assert!(err["error"]["message"].as_str().unwrap().contains("p must lie strictly inside"));
}

#[test]
fn config_file_values_are_used_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"p": 0.3, "ringSize": 64, "seed": 9}"#).unwrap();
    // File values only.
    let out = run(
        &[
            "--config", cfg.to_str().unwrap(),
            "--out-dir", dir.path().join("a").to_str().unwrap(),
            "oracle-report", "--n-max", "4",
        ],
        &[],
    );
    assert!(out.status.success());
    let s = summary(&dir.path().join("a"), "oracle-report");
    assert_eq!(s["config"]["params"]["p"], 0.3);
    assert_eq!(s["config"]["seed"], 9);
    // Explicit flag overrides the file.
    let out = run(
        &[
            "--config", cfg.to_str().unwrap(), "--p", "0.55",
            "--out-dir", dir.path().join("b").to_str().unwrap(),
            "oracle-report", "--n-max", "4",
        ],
        &[],
    );
    assert!(out.status.success());
    let s = summary(&dir.path().join("b"), "oracle-report");
    assert_eq!(s["config"]["params"]["p"], 0.55);
}

#[test]
fn reverse_check_reports_tiny_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["--out-dir", dir.path().to_str().unwrap(), "reverse-check", "--n-max", "8"],
        &[],
    );
    assert!(out.status.success());
    let s = summary(dir.path(), "reverse-check");
    assert_eq!(s["pass"], true);
    for row in s["results"].as_array().unwrap() {
        assert!(row["reversalResidual"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = run(
            &[
                "--L", "128", "--horizon", "30", "--trials", "8", "--seed", "3",
                "--out-dir", out_dir.to_str().unwrap(),
                "couple", "--mode", "front", "--c-grid", "0,0.1,0.5",
            ],
            &[],
        );
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["couple_front_tail.csv", "couple_front_trials.csv"] {
        let bytes_a = fs::read(a.join(name)).unwrap();
        let bytes_b = fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
    // Summaries agree except for the wall time.
    let mut sa = summary(&a, "couple");
    let mut sb = summary(&b, "couple");
    sa.as_object_mut().unwrap().remove("wallTimeS");
    sb.as_object_mut().unwrap().remove("wallTimeS");
    // The configs echo their own out-dirs; drop those too.
    sa["config"].as_object_mut().unwrap().remove("outDir");
    sb["config"].as_object_mut().unwrap().remove("outDir");
    assert_eq!(sa, sb);
}

#[test]
fn simulate_emits_parseable_jump_log_and_tagged_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "--L", "64", "--horizon", "5", "--seed", "4",
            "simulate", "--events-out", "events.jsonl", "--tag-site", "0", "--sample-dt", "0.5",
        ],
        &[("TOOM_OUT_DIR", dir.path().to_str().unwrap())],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    let mut last_t = 0.0;
    for line in log.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        let t = record["t"].as_f64().unwrap();
        assert!(t >= last_t && t <= 5.0);
        last_t = t;
        assert!(record["origin"].as_u64().unwrap() < 64);
        assert!(record["target"].as_u64().unwrap() < 64);
        assert!([1, -1].contains(&record["sign"].as_i64().unwrap()));
        assert!(record.get("direction").is_none());
    }
    let series = fs::read_to_string(dir.path().join("simulate_tagged.csv")).unwrap();
    assert!(series.starts_with("t,y_unwrapped\n"));
    assert!(series.lines().count() > 5);
    let observables = fs::read_to_string(dir.path().join("simulate_observables.csv")).unwrap();
    assert!(observables.starts_with("t,x_additive,j_plus,j_minus,j_total\n"));
    let last = observables.lines().last().unwrap();
    let fields: Vec<&str> = last.split(',').collect();
    // j_total = j_plus + j_minus, and |X(t)| <= t for f = spin(0).
    let jp: u64 = fields[2].parse().unwrap();
    let jm: u64 = fields[3].parse().unwrap();
    assert_eq!(fields[4].parse::<u64>().unwrap(), jp + jm);
    assert!(fields[1].parse::<f64>().unwrap().abs() <= fields[0].parse::<f64>().unwrap() + 1e-9);
    // Left-moving logs carry the direction tag.
    let out = run(
        &[
            "--L", "64", "--horizon", "5", "--seed", "4",
            "simulate", "--events-out", "left.jsonl", "--direction", "left",
        ],
        &[("TOOM_OUT_DIR", dir.path().to_str().unwrap())],
    );
    assert!(out.status.success());
    let log = fs::read_to_string(dir.path().join("left.jsonl")).unwrap();
    assert!(log.lines().all(|l| l.contains(r#""direction":"left""#)));
}
