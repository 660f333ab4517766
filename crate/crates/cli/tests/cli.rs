use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-ascent"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok_stdout(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("h.json"), r#"{"dim": 3, "entries": [[4,0,0],[0,2,0],[0,0,1]]}"#).unwrap();
    std::fs::write(p.join("masked.json"), r#"{"dim": 2, "entries": [[1,0],[0,0]]}"#).unwrap();
    std::fs::write(p.join("g.json"), "[1, 1, 1]").unwrap();
    std::fs::write(p.join("g2.json"), "[0, 5]").unwrap();
    std::fs::write(
        p.join("cones.json"),
        r#"[{"axis":[1,0,0],"half_angle_deg":20},{"axis":[0.5,0.8660254037844386,0],"half_angle_deg":20}]"#,
    )
    .unwrap();
    dir
}

#[test]
fn direction_json() {
    let dir = workdir();
    let v: Value = serde_json::from_str(&ok_stdout(dir.path(), &["direction", "--operator", "h.json", "--gradient", "g.json"])).unwrap();
    assert_eq!(v["kind"], "optimal");
    // H†g = (1/4, 1/2, 1), gain² = 1/4 + 1/2 + 1
    assert!((v["gain"].as_f64().unwrap() - 1.75_f64.sqrt()).abs() < 1e-12);
    let d: Vec<f64> = serde_json::from_value(v["direction"].clone()).unwrap();
    assert!((d[2] / d[0] - 4.0).abs() < 1e-12);
}

#[test]
fn direction_degenerate_json() {
    let dir = workdir();
    let v: Value =
        serde_json::from_str(&ok_stdout(dir.path(), &["direction", "--operator", "masked.json", "--gradient", "g2.json"])).unwrap();
    assert_eq!(v["kind"], "degenerate");
    assert!(v["direction"].is_null());
    assert_eq!(v["gain"], 0.0);
}

#[test]
fn compress_by_rank_and_error() {
    let dir = workdir();
    let base = ["compress", "--operator", "h.json", "--gradient", "g.json"];
    let v: Value = serde_json::from_str(&ok_stdout(dir.path(), &[&base[..], &["--k", "1"]].concat())).unwrap();
    assert_eq!(v["k"], 1);
    assert_eq!(v["op_error"], 1.0);
    assert_eq!(v["leading_mode_gain"], 0.5);
    assert!((v["residual_norm_sq"].as_f64().unwrap() - 1.25).abs() < 1e-14);
    assert_eq!(v["per_mode"].as_array().unwrap().len(), 2);
    assert_eq!(v["per_mode"][0]["index"], 1);

    let v: Value = serde_json::from_str(&ok_stdout(dir.path(), &[&base[..], &["--eps", "1.0"]].concat())).unwrap();
    assert_eq!(v["k"], 0);
    let v: Value = serde_json::from_str(&ok_stdout(dir.path(), &[&base[..], &["--eps", "0.5"]].concat())).unwrap();
    assert_eq!(v["k"], 3);
    assert_eq!(v["residual_norm_sq"], 0.0);
}

#[test]
fn compress_sweep_csv() {
    let dir = workdir();
    let csv = ok_stdout(dir.path(), &["compress", "--operator", "h.json", "--gradient", "g.json", "--sweep"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,op_error,leading_mode_gain,residual_norm_sq");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[4], "3,0.0,0.0,0.0");
}

#[test]
fn compress_rejects_bad_input() {
    let dir = workdir();
    let out = run(dir.path(), &["compress", "--operator", "h.json", "--gradient", "g.json", "--k", "4"]);
    assert!(!out.status.success());
    let out = run(dir.path(), &["compress", "--operator", "h.json", "--gradient", "g.json"]);
    assert!(!out.status.success());
    let out = run(dir.path(), &["direction", "--operator", "h.json", "--gradient", "g2.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gradient has 2 entries"));
}

#[test]
fn threshold_json() {
    let dir = workdir();
    let v: Value = serde_json::from_str(&ok_stdout(dir.path(), &["threshold", "--cones", "cones.json", "--tol", "1e-5"])).unwrap();
    let gamma = v["gamma_star"].as_f64().unwrap();
    assert!((gamma - std::f64::consts::PI / 18.0).abs() < 1e-5);
    let bracket = v["bracket"].as_array().unwrap();
    assert!(bracket[1].as_f64().unwrap() - bracket[0].as_f64().unwrap() <= 1e-5);
    assert_eq!(v["witness"].as_array().unwrap().len(), 3);
}

#[test]
fn threshold_infeasible_at_max_fails() {
    let dir = workdir();
    std::fs::write(
        dir.path().join("ring.json"),
        r#"[{"axis":[1,0],"half_angle_deg":0},{"axis":[-0.5,0.8660254037844386],"half_angle_deg":0},{"axis":[-0.5,-0.8660254037844386],"half_angle_deg":0}]"#,
    )
    .unwrap();
    let out = run(dir.path(), &["threshold", "--cones", "ring.json"]);
    assert!(!out.status.success());
}

#[test]
fn phi_curve_csv() {
    let dir = workdir();
    let csv = ok_stdout(
        dir.path(),
        &["phi-curve", "--cones", "cones.json", "--gamma-max", "0.6", "--steps", "6", "--samples", "20000", "--seed", "3"],
    );
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("gamma,phi,stderr"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0], vec![0.0, 0.0, 0.0]);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1]));
}

#[test]
fn optimize_writes_trace_and_summary() {
    let dir = workdir();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"objective":{"kind":"quadratic","a":[[2,0],[0,0.5]],"b":[2,1.5]},
            "operator_field":{"kind":"mask","mask":[true,true]},
            "budget":{"kind":"sphere","kappa":1.0},
            "theta0":[0,0],"steps":200,"eta":0.2,"out":"trace.csv","agents":["planner","critic"]}"#,
    )
    .unwrap();
    let v: Value = serde_json::from_str(&ok_stdout(dir.path(), &["optimize", "--config", "config.json"])).unwrap();
    assert!(v["final_cost"].as_f64().unwrap() <= 1.0 + 1e-8);
    assert_eq!(v["agents"][1], "critic");
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("step,theta0,theta1,J,C,gain,kind,eta_eff"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() > 2);
    assert!(rows[0].starts_with("0,0,0,0,0,"));
}

#[test]
fn optimize_without_budget_leaves_cost_empty() {
    let dir = workdir();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"objective":{"kind":"rosenbrock"},"operator_field":{"kind":"constant","entries":[[1,0],[0,1]]},
            "budget":null,"theta0":[0,0],"steps":5,"eta":0.001}"#,
    )
    .unwrap();
    let trace = ok_stdout(dir.path(), &["optimize", "--config", "config.json"]);
    let rows: Vec<Vec<&str>> = trace.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[4].is_empty()));
}

#[test]
fn optimize_rejects_infeasible_start() {
    let dir = workdir();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"objective":{"kind":"rosenbrock"},"operator_field":{"kind":"diag_decay","dim":2,"scale":1,"ratio":0.5},
            "budget":{"kind":"sphere","kappa":0.5},"theta0":[1,1],"steps":5,"eta":0.01}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["optimize", "--config", "config.json"]);
    assert!(!out.status.success());
}
