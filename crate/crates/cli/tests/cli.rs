use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn consensus(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_consensus"));
    cmd.args(args).env_remove("CONSENSUS_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("CONSENSUS_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn analyze_reports_thresholds() {
    let v = json(&consensus(&["analyze", "--graph", "path:3", "--p", "0.1", "--beta", "8"], None));
    assert!(v["r_p"].as_f64().unwrap() > 0.0);
    assert!((v["spectral"]["eps_star"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(v["bounds"].as_array().unwrap().len(), 21);
    let v = json(&consensus(&["analyze", "--graph", "star:5", "--p", "0.3"], None));
    assert_eq!(v["r_p"].as_f64().unwrap(), 0.0);
}

#[test]
fn montecarlo_is_deterministic_and_honors_env_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "montecarlo", "--graph", "cycle:4", "--protocol", "repetition", "--p", "0.2", "--rounds", "40",
        "--trials", "130", "--seed", "5", "--tail-rates", "0.3,0.6",
    ];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    json(&consensus(&args, Some(&a)));
    let mut with_flag = args.to_vec();
    with_flag.extend(["--out", b.to_str().unwrap()]);
    json(&consensus(&with_flag, None));
    for name in ["report.json", "runs.csv", "rates.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let runs = fs::read_to_string(a.join("runs.csv")).unwrap();
    assert!(runs.starts_with("trial,round,min_n_v,err_norm\n"));
    assert_eq!(runs.lines().count(), 1 + 130 * 41);
    let rates = fs::read_to_string(a.join("rates.csv")).unwrap();
    assert!(rates.starts_with("quantity,predicted,empirical,ci_lo,ci_hi\n"));
    assert!(rates.contains("tail_p[r=0.6]"));
    assert!(a.join("timing.json").exists());
}

#[test]
fn simulate_dumps_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let v = json(&consensus(
        &["simulate", "--graph", "path:3", "--protocol", "treecode", "--p", "0.2", "--rounds", "15", "--out", out],
        None,
    ));
    assert_eq!(v["rate"]["fit_window"][1], 15);
    let trace = fs::read_to_string(tmp.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 16);
    assert!(tmp.path().join("summary.csv").exists());
}

#[test]
fn config_errors_point_at_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(
        &path,
        "{\n  \"graph\": {\"generator\": \"path:3\"},\n  \"model\": {\"mode\": \"asymmetric\", \"p\": 0.1},\n  \"protocol\": \"repetition\",\n  \"rounds\": 10\n}\n",
    )
    .unwrap();
    let out = consensus(&["montecarlo", "--config", path.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn gamma_and_verify_and_code_bench() {
    let v = json(&consensus(&["gamma", "--graph", "path:2", "--eps", "0.5", "--p", "0.25"], None));
    assert!((v["rate_uncoded_sym"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let v = json(&consensus(
        &["gamma", "--graph", "path:2", "--mode", "asymmetric", "--p", "0.3", "--k-max", "3"],
        None,
    ));
    assert_eq!(v["mse_trajectory"].as_array().unwrap().len(), 4);

    let v = json(&consensus(&["verify", "--graph", "cycle:4", "--p", "0.4", "--runs", "20"], None));
    assert!(v["violations"].as_array().unwrap().is_empty());

    let tmp = tempfile::tempdir().unwrap();
    let v = json(&consensus(
        &["code-bench", "--lambda-bits", "8", "--p", "0.3", "--horizon", "20", "--trials", "50", "--out", tmp.path().to_str().unwrap()],
        None,
    ));
    assert!(v["beta_hat"].as_f64().is_some());
    let csv = fs::read_to_string(tmp.path().join("beta.csv")).unwrap();
    assert!(csv.starts_with("delay,trials,failures,p_hat"));
}
