use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlblue"))
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn suite() -> Value {
    json!({"loadings": [[[1.0, 0.0, 0.0], [0.9, 0.3, 0.0], [0.7, 0.2, 0.4]]], "offsets": [[2.0, 1.5, 1.0]]})
}

fn models() -> Value {
    json!([{"id": 1, "cost": 1.0}, {"id": 2, "cost": 0.1}, {"id": 3, "cost": 0.01}])
}

fn synthetic(mode: Value) -> Value {
    json!({
        "models": models(),
        "covariance": "synthetic",
        "evaluator": {"synthetic": suite()},
        "mode": mode,
        "seed": 3,
        "replications": 50
    })
}

#[test]
fn allocate_budget_respects_budget() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"budget": 20.0})));
    let v = stdout_json(&run(&["allocate", "--config", cfg.to_str().unwrap()]));
    let cost = v["total_cost"].as_f64().unwrap();
    assert!(cost <= 20.0 * (1.0 + 1e-12) && cost > 10.0, "{v}");
    assert_eq!(v["n"].as_array().unwrap().len(), v["groups"].as_array().unwrap().len());
    let var = v["per_output_variance"][0].as_f64().unwrap();
    // plain Monte Carlo with the same budget
    assert!(var < 1.0 / 20.0);
}

#[test]
fn allocate_continuous_writes_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"tolerance": [1e-3]})));
    let out = dir.path().join("a.json");
    let o = run(&["allocate", "--continuous", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let var = v["per_output_variance"][0].as_f64().unwrap();
    assert!((var - 1e-3).abs() <= 1e-3 * 1e-6, "{var}");
}

#[test]
fn pareto_csv_is_sorted_and_monotone() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"pareto": {"tau_tilde": [10.0, 0.01, 1.0, 0.1]}})));
    let out = dir.path().join("f.csv");
    let o = run(&["pareto", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 4);
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!(w[0][0] < w[1][0]);
        // larger tau weights cost more, so cost falls and variance rises
        assert!(w[1][1] <= w[0][1] * (1.0 + 1e-6));
        assert!(w[1][2] >= w[0][2] * (1.0 - 1e-6));
    }
}

#[test]
fn pareto_needs_pareto_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"budget": 5.0})));
    assert_eq!(run(&["pareto", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn estimate_is_reproducible_and_matches_prediction() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"budget": 20.0})));
    let args = ["estimate", "--config", cfg.to_str().unwrap(), "--reps", "400"];
    let a = stdout_json(&run(&args));
    let b = stdout_json(&run(&args));
    assert_eq!(a, b);
    let mu = a["mu_hat"][0].as_f64().unwrap();
    let se = a["standard_error"][0].as_f64().unwrap();
    assert!((mu - 2.0).abs() < 4.0 * se, "mu {mu} se {se}");
    let ratio = a["empirical_variance"][0].as_f64().unwrap() / a["predicted_variance"][0].as_f64().unwrap();
    assert!((0.75..1.3).contains(&ratio), "{ratio}");
    let other = stdout_json(&run(&["estimate", "--config", cfg.to_str().unwrap(), "--reps", "400", "--seed", "9"]));
    assert_ne!(a["mu_hat"], other["mu_hat"]);
}

#[test]
fn estimate_with_saved_allocation() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"budget": 20.0})));
    let alloc = dir.path().join("a.json");
    assert!(run(&["allocate", "--config", cfg.to_str().unwrap(), "--output", alloc.to_str().unwrap()])
        .status
        .success());
    let v = stdout_json(&run(&["estimate", "--config", cfg.to_str().unwrap(), "--allocation", alloc.to_str().unwrap()]));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&alloc).unwrap()).unwrap();
    assert_eq!(v["allocation"]["n"], saved["n"]);
}

#[test]
fn estimate_rejects_fractional_allocation() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"budget": 20.0})));
    let alloc = dir.path().join("a.json");
    let o = run(&["allocate", "--continuous", "--config", cfg.to_str().unwrap(), "--output", alloc.to_str().unwrap()]);
    assert!(o.status.success());
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--allocation", alloc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn benchmark_lists_every_method() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"tolerance": [1e-3]})));
    let v = stdout_json(&run(&["benchmark", "--config", cfg.to_str().unwrap(), "--reps", "20"]));
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["mlblue", "mc", "mlmc", "mfmc"]);
    let blue = rows[0]["total_cost"].as_f64().unwrap();
    for r in &rows[1..] {
        if let Some(c) = r["total_cost"].as_f64() {
            // baselines are integer allocations of a smaller model class
            assert!(blue <= c * 1.05, "{} {c} vs {blue}", r["method"]);
        }
    }
}

#[test]
fn command_evaluator_matches_in_process_suite() {
    let dir = TempDir::new().unwrap();
    let served = write(dir.path(), "served.json", &synthetic(json!({"budget": 20.0})));
    let mut cfg = synthetic(json!({"budget": 20.0}));
    cfg["evaluator"] = json!({"command": {
        "program": env!("CARGO_BIN_EXE_mlblue"),
        "args": ["serve-synthetic", "--config", served.to_str().unwrap()],
        "input_dim": 3
    }});
    cfg["covariance"] = json!({"inline": [[[1.0, 0.9, 0.7], [0.9, 0.9, 0.69], [0.7, 0.69, 0.69]]]});
    let remote = write(dir.path(), "remote.json", &cfg);
    let a = stdout_json(&run(&["estimate", "--config", remote.to_str().unwrap(), "--reps", "5"]));
    let mut local = cfg.clone();
    local["evaluator"] = json!({"synthetic": suite()});
    let local = write(dir.path(), "local.json", &local);
    let b = stdout_json(&run(&["estimate", "--config", local.to_str().unwrap(), "--reps", "5"]));
    assert_eq!(a["mu_hat"], b["mu_hat"]);
}

#[test]
fn config_errors_exit_2_with_pointer() {
    let dir = TempDir::new().unwrap();
    let mut cfg = synthetic(json!({"budget": 20.0}));
    cfg["models"][1]["cost"] = json!(-1.0);
    let p = write(dir.path(), "p.json", &cfg);
    let o = run(&["allocate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/models/1/cost"));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["allocate", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn evaluator_failure_exits_4() {
    let dir = TempDir::new().unwrap();
    let mut cfg = synthetic(json!({"budget": 20.0}));
    cfg["evaluator"] = json!({"command": {
        "program": "sh",
        "args": ["-c", "while read line; do echo '{\"error\": \"diverged\"}'; done"],
        "input_dim": 3
    }});
    cfg["covariance"] = json!({"inline": [[[1.0, 0.9, 0.7], [0.9, 0.9, 0.69], [0.7, 0.69, 0.69]]]});
    let p = write(dir.path(), "p.json", &cfg);
    let o = run(&["estimate", "--config", p.to_str().unwrap(), "--reps", "2"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_reply_exits_4() {
    let dir = TempDir::new().unwrap();
    let mut cfg = synthetic(json!({"budget": 20.0}));
    cfg["evaluator"] = json!({"command": {
        "program": "sh",
        "args": ["-c", "while read line; do echo 'not json'; done"],
        "input_dim": 3
    }});
    cfg["covariance"] = json!({"inline": [[[1.0, 0.9, 0.7], [0.9, 0.9, 0.69], [0.7, 0.69, 0.69]]]});
    let p = write(dir.path(), "p.json", &cfg);
    let o = run(&["estimate", "--config", p.to_str().unwrap(), "--reps", "2"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn solver_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", &synthetic(json!({"budget": 20.0})));
    let o = run(&["allocate", "--config", cfg.to_str().unwrap(), "--feastol", "1e-300", "--gap-tol", "1e-300"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
