use std::path::Path;
use std::process::Command as Process;

use armdp_cli::config::PolicySpec;
use armdp_cli::{run, CliError, Command, ExperimentConfig};

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let (header, rows) = read_csv(path);
    let j = header.iter().position(|h| h == name).unwrap();
    rows.into_iter().map(|r| r[j].clone()).collect()
}

fn quick_config(json: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(json).unwrap();
    cfg.sim.horizon = 50_000;
    cfg.sim.burn_in = 1_000;
    cfg
}

#[test]
fn trace_shows_oscillation_and_decay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(r#"{"primal": "appendix-h", "delay": {"kind": "binary", "p": 0.0, "y_max": 10}, "z_max": 20}"#);
    run(Command::Trace, &cfg, dir.path()).unwrap();
    let rvi: Vec<f64> = column(&dir.path().join("trace_rvi.csv"), "residual").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(rvi.len(), 500);
    assert!(rvi.iter().all(|&r| r > 1e-3));
    let tau: Vec<f64> = column(&dir.path().join("trace_tau_rvi.csv"), "residual").iter().map(|v| v.parse().unwrap()).collect();
    assert!(*tau.last().unwrap() < 1e-8);
    let fpbi = column(&dir.path().join("trace_fpbi.csv"), "residual");
    assert_eq!(fpbi.len(), 500);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["notes"]["rvi"]["oscillatory"], true);
    assert_eq!(meta["notes"]["one_pdsi"]["converged"], true);
}

#[test]
fn sweep_rate_goal_oriented_decreases_then_saturates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(r#"{"z_max": 40, "policies": ["goal_oriented", "zero_wait", "uniform"], "simulate": false}"#);
    run(Command::SweepRate, &cfg, dir.path()).unwrap();
    let path = dir.path().join("sweep_rate.csv");
    let (header, rows) = read_csv(&path);
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let costs: Vec<f64> = rows
        .iter()
        .filter(|r| r[col("policy")] == "goal_oriented")
        .map(|r| r[col("analytic_cost")].parse().unwrap())
        .collect();
    assert_eq!(costs.len(), 12);
    assert!(costs.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(costs[0] > costs[11] + 0.5);
    assert!((costs[10] - costs[11]).abs() < 1e-8);
    assert!(rows.iter().any(|r| r[col("status")] == "over_budget"));
}

#[test]
fn empty_policies_rejected() {
    let err = ExperimentConfig::from_json(r#"{"policies": []}"#).unwrap_err();
    assert!(matches!(&err, CliError::Config(m) if m.contains("policies")), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn parse_errors_name_line_and_field() {
    let text = "{\n  \"solver\": {\n    \"tau\": \"half\"\n  }\n}";
    let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
    assert!(err.contains("line 3") && err.contains("solver.tau"), "{err}");
    let err = ExperimentConfig::from_json(r#"{"sim": {"horizn": 10}}"#).unwrap_err().to_string();
    assert!(err.contains("horizn"), "{err}");
    let err = ExperimentConfig::from_json(r#"{"primal": "nope"}"#).unwrap_err().to_string();
    assert!(err.contains("unknown preset"), "{err}");
}

#[test]
fn policy_names_parse() {
    let cfg = ExperimentConfig::from_json(
        r#"{"policies": ["goal_oriented", {"constant_wait": 3}, {"uniform_period": 12}, "myopic_zero_wait"]}"#,
    )
    .unwrap();
    assert_eq!(cfg.policies[1], PolicySpec::ConstantWait(3));
    assert_eq!(cfg.policies[2].label(), "uniform_12");
}

#[test]
fn reruns_from_sidecar_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(r#"{"policies": ["goal_oriented", "aoi_optimal", {"uniform_period": 12}]}"#);
    run(Command::Simulate, &cfg, dir.path()).unwrap();
    let first = std::fs::read(dir.path().join("simulate.csv")).unwrap();
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("simulate.meta.json")).unwrap()).unwrap();
    let echoed: ExperimentConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    let again = tempfile::tempdir().unwrap();
    run(Command::Simulate, &echoed, again.path()).unwrap();
    assert_eq!(first, std::fs::read(again.path().join("simulate.csv")).unwrap());
    assert!(!first.contains(&b'\r'));
}

#[test]
fn sweep_order_independent_of_threads() {
    let json = r#"{"delay_sweep": [{"kind": "binary", "p": 0.3, "y_max": 2}, {"kind": "binary", "p": 0.5, "y_max": 6},
        {"kind": "truncated_geometric", "q": 0.4, "y_max": 5}], "policies": ["goal_oriented", "zero_wait"]}"#;
    let mut one = quick_config(json);
    one.threads = Some(1);
    let mut four = one.clone();
    four.threads = Some(4);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(Command::SweepDelay, &one, a.path()).unwrap();
    run(Command::SweepDelay, &four, b.path()).unwrap();
    let read = |d: &Path| std::fs::read(d.join("sweep_delay.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(column(&a.path().join("sweep_delay.csv"), "point"), ["0", "0", "1", "1", "2", "2"]);
}

#[test]
fn table6_records_inferred_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(r#"{"simulate": false}"#);
    run(Command::Table6, &cfg, dir.path()).unwrap();
    let reductions = column(&dir.path().join("table6.csv"), "reduction_pct");
    assert_eq!(reductions.len(), 12);
    assert!(reductions.iter().all(|r| r.parse::<f64>().unwrap() > 0.0));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("table6.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["notes"]["inferred_parameters"]["p"], 0.3);
    assert_eq!(meta["notes"]["inferred_parameters"]["y_max"], serde_json::json!([2, 8, 11, 20]));
}

#[test]
fn solve_and_solve_rate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(r#"{"z_max": 40, "f_max": [0.05, 0.2], "method": "bisec_tau_rvi"}"#);
    run(Command::Solve, &cfg, dir.path()).unwrap();
    run(Command::SolveRate, &cfg, dir.path()).unwrap();
    let rho: f64 = column(&dir.path().join("solve.csv"), "rho_star")[0].parse().unwrap();
    assert!((rho - 18.2007512197).abs() < 1e-8);
    let h: Vec<f64> = column(&dir.path().join("solve_rate.csv"), "h_star").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(h.len(), 4);
    assert!((h[0] - h[1]).abs() < 1e-4);
    assert!((h[2] - rho).abs() < 1e-6 && (h[3] - rho).abs() < 1e-6);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_armdp");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"policies": []}"#).unwrap();
    let out = dir.path().join("out");
    let code = |args: &[&str]| Process::new(bin).args(args).output().unwrap().status.code().unwrap();
    let out_s = out.to_str().unwrap();
    assert_eq!(code(&["--config", bad.to_str().unwrap(), "--out", out_s, "solve"]), 1);
    let infeasible = dir.path().join("infeasible.json");
    std::fs::write(&infeasible, r#"{"f_max": 0.01}"#).unwrap();
    assert_eq!(code(&["--config", infeasible.to_str().unwrap(), "--out", out_s, "solve-rate"]), 2);
    assert_eq!(code(&["--preset", "appendix-h", "--seed", "7", "--out", out_s, "solve"]), 0);
    assert!(out.join("solve.csv").exists());
    let meta = std::fs::read_to_string(out.join("solve.meta.json")).unwrap();
    assert!(meta.contains("\"seed\": 7"));
}
