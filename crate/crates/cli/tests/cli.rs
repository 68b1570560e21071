use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabletrace")).args(args).output().expect("binary runs")
}

const SMALL_TRACE: [&str; 12] = [
    "trace",
    "--set",
    "domain=box:0,0:1,1",
    "--set",
    "alpha=2",
    "--set",
    "mode=crosscheck",
    "--set",
    "t_grid=0.1,0.05,0.025",
    "--set",
    "n_points=40",
    "--seed=5",
];

#[test]
fn kernel_prints_gaussian_values() {
    let out = run(&["kernel", "--d", "1", "--alpha", "2", "--t", "1", "--r", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let v: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 1.0 / (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(run(&["kernel", "--d", "2", "--alpha", "2.5"]).status.code(), Some(2));
    assert_eq!(run(&["trace", "--set", "t_grid=0.1,0.2"]).status.code(), Some(2));
    // a box is refused for theorem runs
    assert_eq!(run(&["trace", "--set", "domain=box:0,0:1,1", "--set", "t_grid=0.05,0.02"]).status.code(), Some(2));
    // 0.4^(2/3) > R/2 for the unit disk
    assert_eq!(run(&["trace", "--set", "t_grid=0.4,0.2"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn sample_test_passes() {
    let out = run(&["sample-test", "--d", "2", "--alpha", "1.2", "--n", "20000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn exit_writes_estimate_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["exit", "--domain", "ball:0,0:1", "--alpha", "2", "--x", "0,0", "--paths", "500", "--step", "0.01", "--out", d]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
    assert!(text.starts_with("quantity,t,x0,x1,mean,std_error,n,step,bias_diagnostic,seed\n"));
}

#[test]
fn trace_output_is_deterministic_and_round_trips() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut args = SMALL_TRACE.to_vec();
        args.extend(["--out", dir.path().to_str().unwrap()]);
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv_a = fs::read(a.path().join("trace.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.path().join("trace.csv")).unwrap());
    let text = String::from_utf8(csv_a.clone()).unwrap();
    assert!(text.starts_with("# schema=1 config_hash="));
    assert!(text.contains("seed=5"));
    assert_eq!(text.lines().nth(1).unwrap(), "t,Z_est,Z_err,first_term,second_term,residual,residual_normalized");
    assert_eq!(text.lines().count(), 5);

    let report = a.path().join("report.json");
    let out = run(&["report", "--input", report.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    assert_eq!(out.stdout, csv_a);
}

#[test]
fn thread_count_does_not_change_results() {
    let mut one = SMALL_TRACE.to_vec();
    one.push("--threads=1");
    let mut two = SMALL_TRACE.to_vec();
    two.push("--threads=2");
    let (x, y) = (run(&one), run(&two));
    assert!(x.status.success() && y.status.success());
    assert_eq!(x.stdout, y.stdout);
}

#[test]
fn spectrum_writes_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["spectrum", "--domain", "interval", "--alpha", "2", "--h", "0.01", "--k", "20", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("spectrum.json")).unwrap()).unwrap();
    let l1 = summary["lambda1"].as_f64().unwrap();
    assert!((l1 - std::f64::consts::PI.powi(2)).abs() < 0.01 * l1);
    assert!(summary["karamata_ratio_top"].as_f64().is_some());
}

#[test]
fn config_file_seed_holds_unless_flag_given() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small crosscheck\ndomain = box:0,0:1,1\nalpha = 2\nmode = crosscheck\nt_grid = 0.1, 0.05, 0.025\nn_points = 20\nseed = 9\n").unwrap();
    let path = cfg.to_str().unwrap();
    let from_file = String::from_utf8(run(&["trace", "--config", path]).stdout).unwrap();
    assert!(from_file.lines().next().unwrap().ends_with("seed=9"));
    let flagged = String::from_utf8(run(&["trace", "--config", path, "--seed", "4"]).stdout).unwrap();
    assert!(flagged.lines().next().unwrap().ends_with("seed=4"));
}
