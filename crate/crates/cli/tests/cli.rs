use std::process::{Command, Output};

fn fsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsa"))
        .args(args)
        .env_remove("FSA_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn xi_table() {
    let o = fsa(&["xi", "--law", "spr", "--h", "3", "--L", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "k,p\n0,0.25\n1,0.75\n");
}

#[test]
fn xi_json_has_exact_fractions() {
    let o = fsa(&["xi", "--h", "3", "--L", "2", "--out", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["exact"][0], "1/4");
    assert_eq!(v["exact"][1], "3/4");
    assert_eq!(v["method"], "exact-rational");
}

#[test]
fn alpha_star_spr() {
    let o = fsa(&["alpha-star", "--law", "mpr", "--M", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert!((row[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-8);
    assert!((row[2].parse::<f64>().unwrap() - (-1.0f64).exp()).abs() < 1e-11);
}

#[test]
fn region_grid() {
    let o = fsa(&["region", "--law", "mpr", "--M", "3", "--alpha-grid", "0.1:5:0.1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), "alpha,spr,phi_m3");
    assert_eq!(out.lines().count(), 51);
    let row = out.lines().find(|l| l.starts_with("1,")).unwrap();
    let phi: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((phi - 2.5 * (-1.0f64).exp()).abs() < 1e-11);
}

#[test]
fn usage_errors_exit_2() {
    let o = fsa(&["drift", "--L", "4", "--alpha", "1", "--lambda", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"));

    let o = fsa(&["drift"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("needs --lambda"));

    let o = fsa(&["xi", "--law", "mpr", "--h", "2", "--L", "2"]);
    assert_eq!(o.status.code(), Some(2));

    let o = fsa(&["drift", "--lambda", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[invalid-parameter]:"));

    let o = fsa(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn computation_errors_exit_1() {
    let o = fsa(&["xi", "--h", "12", "--L", "12", "--brute-force"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[cap-exceeded]:"));
    assert!(o.stdout.is_empty());
}

#[test]
fn help_exits_0() {
    let o = fsa(&["transience", "--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("y_i = (i+1)^-theta"));
}

#[test]
fn identical_runs_identical_bytes() {
    let args = [
        "transience", "--lambda", "0.45", "--alpha", "1", "--h-range", "1:120", "--out", "json",
    ];
    let a = fsa(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = fsa(&[&args[..], &["--threads", "1"]].concat());
    assert_eq!(a.stdout, b.stdout);

    let sim = ["simulate", "--lambda", "0.3", "--frames", "500", "--runs", "4", "--seed", "9"];
    let a = fsa(&sim);
    let b = fsa(&[&sim[..], &["--threads", "2"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn output_file_and_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fsa"))
        .args(["chain", "--L", "2", "--arrivals", "none", "--n-max", "2", "--output", "rows.csv"])
        .env("FSA_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let written = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(written, "h,k,p\n0,0,1\n1,0,1\n2,0,0.5\n2,2,0.5\n");
}

#[test]
fn custom_arrivals_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pmf.csv");
    std::fs::write(&path, "k,p\n0,0.5\n1,0.5\n").unwrap();
    let arg = format!("custom:{}", path.display());
    let o = fsa(&["drift", "--L", "2", "--arrivals", &arg, "--h-range", "0:0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "h,L,alpha,lambda,r_h,drift\n0,2,0,1,0,1\n");

    std::fs::write(&path, "0,0.5\n1,0.4\n").unwrap();
    let o = fsa(&["drift", "--L", "2", "--arrivals", &arg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn drift_json_carries_verdict() {
    let o = fsa(&["drift", "--alpha", "1", "--lambda", "0.25", "--h-range", "0:50", "--out", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"]["verdict"], "stable");
    assert_eq!(v["relation"], "theta");
    assert!(v["negative_from"].as_u64().unwrap() <= 20);
}

#[test]
fn simulate_trace_and_stationary() {
    let o = fsa(&["simulate", "--L", "1", "--arrivals", "none", "--initial-backlog", "1", "--frames", "3"]);
    assert_eq!(stdout(&o), "frame,backlog,L,arrivals,successes\n0,1,1,0,1\n1,0,1,0,0\n2,0,1,0,0\n");

    let o = fsa(&["chain", "--L", "4", "--arrivals", "none", "--n-max", "5", "--stationary"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("h,pi\n0,1\n"));
}

#[test]
fn validate_passes() {
    let o = fsa(&["validate"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}
