use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sebayes::eval::{auroc, load_dataset, parse_results, BenchmarkReport};
use tempfile::TempDir;

fn sebayes(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sebayes"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A simulated workload of `n` prompts written to a fresh directory.
fn workload(n: usize) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let o = sebayes(
        dir.path(),
        &["simulate", "--out", "data.jsonl", "--scenario", "scenario.json", "--n-prompts", &n.to_string(), "--seed", "5"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let path = dir.path().to_path_buf();
    (dir, path)
}

#[test]
fn estimate_three_prompts() {
    let (_dir, path) = workload(3);
    let o = sebayes(&path, &["estimate", "--dataset", "data.jsonl", "--scenario", "scenario.json", "--n-max", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let results = parse_results(&stdout(&o)).unwrap();
    assert_eq!(results.len(), 3);
    let ids: Vec<_> = results.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["p0000", "p0001", "p0002"]);
    for r in &results {
        assert!(r.samples_used >= 1 && r.samples_used <= 6);
        assert!(r.entropy >= 0.0 && r.variance >= 0.0);
    }
}

#[test]
fn estimate_to_file_then_auroc() {
    let (_dir, path) = workload(12);
    let o = sebayes(
        &path,
        &["estimate", "--dataset", "data.jsonl", "--scenario", "scenario.json", "--out", "results.jsonl", "--workers", "2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let results = parse_results(&std::fs::read_to_string(path.join("results.jsonl")).unwrap()).unwrap();
    let records = load_dataset(path.join("data.jsonl")).unwrap();
    assert_eq!(results.len(), 12);
    let scores: Vec<f64> = results.iter().map(|r| r.entropy).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.label == Some(1)).collect();

    let o = sebayes(&path, &["auroc", "--results", "results.jsonl", "--dataset", "data.jsonl"]);
    if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
        assert_eq!(o.status.code(), Some(1));
    } else {
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let printed: f64 = stdout(&o).trim().parse().unwrap();
        assert_eq!(printed, auroc(&scores, &labels).unwrap());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let (_dir, path) = workload(4);
    std::fs::write(
        path.join("run.toml"),
        "scenario = \"scenario.json\"\n[estimator]\nn_max = 2\ngamma = 1e-12\n",
    )
    .unwrap();
    let o = sebayes(&path, &["estimate", "--config", "run.toml", "--dataset", "data.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(parse_results(&stdout(&o)).unwrap().iter().all(|r| r.samples_used <= 2));

    let o = sebayes(&path, &["estimate", "--config", "run.toml", "--dataset", "data.jsonl", "--n-max", "3"]);
    let results = parse_results(&stdout(&o)).unwrap();
    assert!(results.iter().all(|r| r.samples_used <= 3));
    assert!(results.iter().any(|r| r.samples_used == 3));
}

#[test]
fn calibrate_prints_threshold() {
    let (_dir, path) = workload(10);
    let o = sebayes(
        &path,
        &["calibrate", "--dataset", "data.jsonl", "--scenario", "scenario.json", "--target-n", "3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let gamma = v["gamma"].as_f64().unwrap();
    assert!(gamma > 0.0);
    assert!(v["achieved_mean"].as_f64().unwrap() >= 1.0);
}

#[test]
fn benchmark_writes_one_row_per_method_and_budget() {
    let (_dir, path) = workload(10);
    let o = sebayes(
        &path,
        &["benchmark", "--dataset", "data.jsonl", "--scenario", "scenario.json", "--out", "report.json", "--budgets", "2,3,4"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: BenchmarkReport = serde_json::from_str(&std::fs::read_to_string(path.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.n_prompts, 10);
    assert!(report.rows.iter().all(|r| r.rmse.is_some() && r.runtime_secs.is_none()));
    let csv = std::fs::read_to_string(path.join("report.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("row,")).count(), 6);
    // One histogram per adaptive budget, one line per sample count 1..=n_max.
    assert_eq!(csv.lines().filter(|l| l.starts_with("hist,")).count(), 3 * 10);
    assert!(stdout(&o).contains("adaptive"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = sebayes(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = sebayes(dir.path(), &["estimate", "--dataset", "x", "--gama", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_files_are_usage_errors() {
    let (_dir, path) = workload(2);
    let o = sebayes(&path, &["estimate", "--dataset", "absent.jsonl", "--scenario", "scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.jsonl"));
    let o = sebayes(&path, &["estimate", "--dataset", "data.jsonl", "--scenario", "absent.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = sebayes(&path, &["estimate", "--dataset", "data.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn incompatible_choices_are_usage_errors() {
    let (_dir, path) = workload(2);
    let o = sebayes(&path, &["estimate", "--dataset", "data.jsonl", "--backend", "http", "--oracle", "ground-truth"]);
    assert_eq!(o.status.code(), Some(2));
    let o = sebayes(&path, &["estimate", "--dataset", "data.jsonl", "--scenario", "scenario.json", "--gamma", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_with_backend_code() {
    let (_dir, path) = workload(1);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    std::fs::write(
        path.join("http.toml"),
        format!("backend = \"http\"\noracle = \"exact\"\n[http]\nendpoint = \"http://127.0.0.1:{port}/v1\"\nmax_attempts = 1\n"),
    )
    .unwrap();
    let o = sebayes(&path, &["estimate", "--config", "http.toml", "--dataset", "data.jsonl"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
