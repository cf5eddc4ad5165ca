use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rct_core::datagen::{sample_dataset, Case};
use rct_core::io::load_dataset;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    rct_cli::run(std::iter::once("rct").chain(args.iter().copied()))
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

/// A small model-1 dataset (`n = 60`, `p = 30`) written by `generate`.
fn small_data(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("d.csv");
    let code = run(&["generate", "--model", "1", "--n", "60", "--p", "30", "--seed", "3", "--out", &s(&path)]);
    assert_eq!(code, 0);
    path
}

fn support(v: &Value) -> Vec<usize> {
    v.as_array()
        .unwrap()
        .iter()
        .enumerate()
        .filter(|(_, x)| x.as_f64().unwrap() != 0.0)
        .map(|(j, _)| j)
        .collect()
}

#[test]
fn generate_writes_full_size_csv_deterministically() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let code = run(&["generate", "--model", "1", "--case", "a", "--n", "100", "--p", "2000", "--seed", "7", "--out", &s(out)]);
        assert_eq!(code, 0);
    }
    let text = fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2001);
    assert_eq!(header[0], "x1");
    assert_eq!(header[1999], "x2000");
    assert_eq!(header[2000], "y");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.split(',').count() == 2001));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let meta = json(&dir.path().join("a.meta.json"));
    assert_eq!(meta["truth_support"].as_array().unwrap().len(), 20);
    assert_eq!(meta["config"]["generate"]["seed"], 7);
}

#[test]
fn generated_file_reads_back_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let path = small_data(&dir);
    let loaded = load_dataset(&path).unwrap();
    let direct = sample_dataset(1, Case::A, 60, 30, 3).unwrap();
    assert_eq!(loaded.design(), direct.design());
    assert_eq!(loaded.response(), direct.response());
    assert_eq!(loaded.truth(), direct.truth());
}

#[test]
fn invalid_model_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["generate", "--model", "11", "--out", &s(&dir.path().join("x.csv"))]), 1);
    assert_eq!(run(&["generate", "--model", "1", "--case", "d"]), 1);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("missing").join("x.csv");
    assert_eq!(run(&["generate", "--n", "10", "--p", "20", "--out", &s(&out)]), 2);
}

#[test]
fn fit_reports_convergence_and_echoes_config() {
    let dir = TempDir::new().unwrap();
    let data = small_data(&dir);
    let out = dir.path().join("fit.json");
    let code = run(&["fit", "--data", &s(&data), "--method", "rct", "--lambda", "0.1", "--eta", "0.2", "--out", &s(&out)]);
    assert_eq!(code, 0);
    let r = json(&out);
    assert_eq!(r["fit"]["converged"], true);
    assert_eq!(r["fit"]["beta"].as_array().unwrap().len(), 30);
    assert_eq!(r["fit"]["beta_thresholded"].as_array().unwrap().len(), 30);
    assert!(!r["fit"]["objective_trace"].as_array().unwrap().is_empty());
    assert!(r["fit"]["metrics"]["fnr"].is_number());
    assert_eq!(r["config"]["solver"]["lambda"], 0.1);
    // defaults are echoed too
    assert_eq!(r["config"]["solver"]["tau"], 0.01);
    assert_eq!(r["config"]["fit"]["method"], "rct");
}

#[test]
fn eta_zero_matches_lasso_support() {
    let dir = TempDir::new().unwrap();
    let data = small_data(&dir);
    let (a, b) = (dir.path().join("rct.json"), dir.path().join("lasso.json"));
    let code = run(&[
        "fit", "--data", &s(&data), "--eta", "0", "--groups", "singleton", "--omega", "1e9", "--lambda", "0.3",
        "--step", "0.1", "--tol", "1e-10", "--max-iter", "100000", "--out", &s(&a),
    ]);
    assert_eq!(code, 0);
    let code = run(&["fit", "--data", &s(&data), "--method", "lasso", "--lambda", "0.3", "--lasso-tol", "1e-12", "--out", &s(&b)]);
    assert_eq!(code, 0);
    let (ra, rb) = (json(&a), json(&b));
    assert_eq!(support(&ra["fit"]["beta"]), support(&rb["fit"]["beta"]));
}

#[test]
fn fit_validation_errors() {
    let dir = TempDir::new().unwrap();
    let data = small_data(&dir);
    let out = s(&dir.path().join("f.json"));
    assert_eq!(run(&["fit", "--data", &s(&data), "--lambda", "-1", "--out", &out]), 1);
    assert_eq!(run(&["fit", "--data", &s(&data), "--tau", "0", "--out", &out]), 1);
    assert_eq!(run(&["fit", "--data", &s(&data), "--method", "stgp", "--out", &out]), 1);
    assert_eq!(run(&["fit", "--out", &out]), 1);

    let no_y = dir.path().join("no_y.csv");
    fs::write(&no_y, "x1,x2\n1,2\n3,4\n").unwrap();
    assert_eq!(run(&["fit", "--data", &s(&no_y), "--out", &out]), 2);
    assert_eq!(run(&["fit", "--data", &s(&dir.path().join("absent.csv")), "--out", &out]), 2);
}

#[test]
fn format_errors_name_the_cell() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x1,x2,y\n1,2,3\n4,oops,6\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rct"))
        .args(["fit", "--data", &s(&bad), "--out", &s(&dir.path().join("f.json"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}

#[test]
fn cv_with_a_single_pair_selects_it() {
    let dir = TempDir::new().unwrap();
    let data = small_data(&dir);
    let out = dir.path().join("cv.json");
    let code = run(&[
        "cv", "--data", &s(&data), "--lambdas", "0.1", "--etas", "0.2", "--folds", "3", "--max-iter", "2000",
        "--out", &s(&out),
    ]);
    assert_eq!(code, 0);
    let r = json(&out);
    assert_eq!(r["selected_lambda"], 0.1);
    assert_eq!(r["selected_eta"], 0.2);
    assert_eq!(r["cv"]["per_fold"].as_array().unwrap().len(), 3);
    assert_eq!(r["refit"]["lambda"], 0.1);
}

#[test]
fn cv_default_grids_with_pilot() {
    let dir = TempDir::new().unwrap();
    let data = small_data(&dir);
    let out = dir.path().join("cv.json");
    let code = run(&[
        "cv", "--data", &s(&data), "--lambda-count", "6", "--lambda-ratio", "0.05", "--step-scale", "4",
        "--max-iter", "2000", "--no-refit", "--out", &s(&out),
    ]);
    assert_eq!(code, 0);
    let r = json(&out);
    let lambdas = r["lambdas"].as_array().unwrap();
    assert_eq!(lambdas.len(), 6);
    assert_eq!(r["etas"][0], 0.0);
    assert_eq!(r["cv"]["grid"].as_array().unwrap().len(), 6 * r["etas"].as_array().unwrap().len());
    assert!(r.get("refit").is_none());
}

#[test]
fn cv_rejects_single_fold() {
    let dir = TempDir::new().unwrap();
    let data = small_data(&dir);
    assert_eq!(run(&["cv", "--data", &s(&data), "--folds", "1", "--lambdas", "0.1", "--etas", "0"]), 1);
}

#[test]
fn benchmark_writes_one_row_per_method() {
    let dir = TempDir::new().unwrap();
    let (csv, js) = (dir.path().join("b.csv"), dir.path().join("b.json"));
    let code = run(&[
        "benchmark", "--models", "3a", "--methods", "rct,lasso", "--reps", "2", "--n", "60", "--p", "40",
        "--lambda-count", "5", "--step-scale", "4", "--max-iter", "2000", "--lasso-tol", "1e-5", "--csv", &s(&csv),
        "--json", &s(&js),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("3,a,rct,2,0,"));
    assert!(rows[1].starts_with("3,a,lasso,2,0,"));
    let r = json(&js);
    assert_eq!(r["table"]["records"].as_array().unwrap().len(), 4);
    assert_eq!(r["config"]["benchmark"]["replications"], 2);
}

#[test]
fn benchmark_configuration_errors() {
    assert_eq!(run(&["benchmark", "--reps", "0"]), 1);
    assert_eq!(run(&["benchmark", "--models", "12a"]), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_rct"))
        .args(["benchmark", "--methods", "rct,stgp", "--reps", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rct, lasso, adalasso"), "{err}");
}

#[test]
fn check_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert_eq!(run(&["check", "--seed", "13", "--out", &s(&a)]), 0);
    assert_eq!(run(&["check", "--seed", "13", "--out", &s(&b)]), 0);
    let (ra, rb) = (json(&a), json(&b));
    assert_eq!(ra["checks"], rb["checks"]);
    assert_eq!(ra["passed"], true);
    assert!(ra["checks"][0]["measured"].as_f64().unwrap() < 1e-6);
}

#[test]
fn broken_gradient_fails_the_check() {
    let out = Command::new(env!("CARGO_BIN_EXE_rct"))
        .args(["check", "--break-gradient"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().next().unwrap().starts_with("FAIL gradient"), "{stdout}");
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = TempDir::new().unwrap();
    let data = small_data(&dir);
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[solver]\nlambda = 0.3\neta = 0.1\nmax_iter = 500\n").unwrap();
    let out = dir.path().join("fit.json");
    let args = ["--config", &s(&cfg), "fit", "--data", &s(&data), "--out", &s(&out)];
    assert_eq!(run(&args), 0);
    let r = json(&out);
    assert_eq!(r["config"]["solver"]["lambda"], 0.3);
    assert_eq!(r["config"]["solver"]["step"], 0.01);

    let mut with_flag = args.to_vec();
    with_flag.extend(["--lambda", "0.2"]);
    assert_eq!(run(&with_flag), 0);
    let r = json(&out);
    assert_eq!(r["config"]["solver"]["lambda"], 0.2);
    assert_eq!(r["config"]["solver"]["eta"], 0.1);

    fs::write(&cfg, "[solver]\nlamda = 0.3\n").unwrap();
    assert_eq!(run(&args), 1);
}

#[test]
fn worker_settings_are_validated() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rct"))
        .args(["check"])
        .env("RCT_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_rct"))
        .args(["generate", "--n", "5", "--p", "20", "--out"])
        .arg(dir.path().join("w.csv"))
        .env("RCT_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(run(&["--workers", "0", "check"]), 1);
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(run(&["--version"]), 0);
    assert_eq!(run(&["help"]), 0);
    assert_eq!(run(&[]), 1);
}
