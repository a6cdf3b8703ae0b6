use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_varx-lowrank"))
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const NOISY: &str = r#"{
    "n": 4, "m": 3, "r": 1, "T0": 3,
    "N_grid": [14, 28, 56],
    "trials_per_cell": 3,
    "input_family": "gaussian",
    "noise_family": "gaussian",
    "sigma_u": 1.0, "sigma_w": 0.2,
    "master_seed": 5
}"#;

const NOISELESS: &str = r#"{
    "n": 4, "m": 3, "r": 1, "T0": 3,
    "N_grid": [5, 20],
    "trials_per_cell": 2,
    "input_family": "rademacher",
    "sigma_u": 1.0,
    "master_seed": 5
}"#;

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn experiment_writes_reproducible_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", NOISY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, workers) in [(&a, "1"), (&b, "2")] {
        let out = run(
            &["error-scaling", "--config", &cfg, "--out", dir.to_str().unwrap()],
            &[("VARX_WORKERS", workers)],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("fitted log-log slope"));
    }
    for file in [
        "error_scaling_trials.csv",
        "error_scaling_cells.csv",
        "error_scaling_op_err.dat",
        "error_scaling_summary.json",
    ] {
        let x = fs::read(a.join(file)).unwrap();
        let y = fs::read(b.join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between runs");
    }
    let csv = fs::read_to_string(a.join("error_scaling_trials.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "experiment,N,trial,seed,success,op_err,frob_err,nuc_err,lambda,kkt_residual,premise_held,bound,violated,wall_ms"
    );
    assert_eq!(csv.lines().count(), 1 + 9);
}

#[test]
fn overrides_change_trials_and_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", NOISY);
    let dir = tmp.path().join("o");
    let out = run(
        &[
            "bounds-check",
            "--config",
            &cfg,
            "--out",
            dir.to_str().unwrap(),
            "--trials",
            "1",
            "--seed",
            "77",
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("bounds_check_trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        code(&run(&["rip-profile", "--config", missing.to_str().unwrap()], &[])),
        2
    );

    let unordered = write_config(tmp.path(), "bad.json", &NOISY.replace("[14, 28, 56]", "[28, 14]"));
    assert_eq!(code(&run(&["error-scaling", "--config", &unordered], &[])), 2);

    let noisy = write_config(tmp.path(), "noisy.json", NOISY);
    let out_dir = tmp.path().join("x");
    let out = run(
        &[
            "phase-transition",
            "--config",
            &noisy,
            "--out",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("noiseless"));

    let out = run(&["error-scaling", "--config", &noisy, "--trials", "0"], &[]);
    assert_eq!(code(&out), 2);

    let out = run(&["error-scaling", "--config", &noisy], &[("VARX_WORKERS", "zero")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_then_estimate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", NOISELESS);
    let data_dir = tmp.path().join("data");
    let out = run(
        &["simulate", "--config", &cfg, "--out", data_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let header = fs::read_to_string(data_dir.join("data_N20").join("Z.csv")).unwrap();
    assert!(header.starts_with("col0,col1,col2,col3,col4,col5,col6\n"));

    let bundle = data_dir.join("data_N20.json");
    let with_bundle = NOISELESS.replace(
        "\"master_seed\": 5",
        &format!("\"master_seed\": 5, \"data_bundle\": {:?}", bundle.to_str().unwrap()),
    );
    let cfg2 = write_config(tmp.path(), "est.json", &with_bundle);
    let est_dir = tmp.path().join("est");
    let out = run(
        &["estimate", "--config", &cfg2, "--out", est_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let est: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(est_dir.join("estimate.json")).unwrap()).unwrap();
    for key in [
        "theta_hat",
        "lambda_used",
        "iters",
        "converged",
        "kkt_residual",
        "objective",
    ] {
        assert!(est.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn infeasible_constraints_exit_with_3() {
    let tmp = TempDir::new().unwrap();
    // Z has rank one and X is outside its range
    let bundle = r#"{"x":{"rows":2,"cols":1,"data":[1.0,0.0]},
                     "z":{"rows":2,"cols":2,"data":[1.0,1.0,1.0,1.0]}}"#;
    let bundle_path = tmp.path().join("bad.json");
    fs::write(&bundle_path, bundle).unwrap();
    let body = NOISELESS.replace(
        "\"master_seed\": 5",
        &format!(
            "\"master_seed\": 5, \"data_bundle\": {:?}",
            bundle_path.to_str().unwrap()
        ),
    );
    let cfg = write_config(tmp.path(), "cfg.json", &body);
    let out = run(
        &["estimate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
