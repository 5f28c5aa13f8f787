//! End-to-end tests of the `sptmle` binary: flag/config resolution, output
//! files, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sptmle")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sptmle-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn simulate_writes_outputs_and_summary() {
    let out = tmp_dir("sim");
    let o = run(&[
        "simulate",
        "--dgp",
        "linear",
        "--n",
        "50",
        "--reps",
        "2",
        "--seed",
        "3",
        "--estimators",
        "tmle,sp_tmle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("estimator,dgp,n,"), "stdout: {stdout}");
    assert!(stdout.contains("tmle,linear,50"));
    for f in ["summary.csv", "replicates.csv", "config.resolved.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let resolved: serde_json::Value =
        serde_json::from_str(&read(&out.join("config.resolved.json"))).unwrap();
    assert_eq!(resolved["seed"], 3);
    assert_eq!(resolved["n-grid"], serde_json::json!([50]));
    assert_eq!(resolved["reps"], 2);
}

#[test]
fn flags_override_config_file() {
    let out = tmp_dir("cfg");
    let cfg = out.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dgp": "step", "n": 50, "reps": 2, "seed": 7, "estimators": ["hal"]}"#,
    )
    .unwrap();
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let resolved: serde_json::Value =
        serde_json::from_str(&read(&out.join("config.resolved.json"))).unwrap();
    assert_eq!(resolved["seed"], 9, "flag must beat the config file");
    assert_eq!(resolved["dgp"], "step", "file value used when flag absent");
    assert_eq!(resolved["estimators"], serde_json::json!(["hal"]));
}

#[test]
fn invalid_config_json_reports_location() {
    let out = tmp_dir("badjson");
    let cfg = out.join("bad.json");
    std::fs::write(&cfg, "{\n  \"seed\": 3,,\n}\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("bad.json:2:"),
        "stderr should carry file:line: {err}"
    );
}

#[test]
fn single_replicate_is_rejected() {
    let out = tmp_dir("reps1");
    let o = run(&[
        "simulate",
        "--dgp",
        "linear",
        "--n",
        "50",
        "--reps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("reps"), "stderr: {err}");
}

#[test]
fn unknown_estimator_is_rejected() {
    let o = run(&["simulate", "--estimators", "bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn estimate_runs_on_csv_dataset() {
    use sptmle::dgp::{generate, DgpSpec, TreatmentMechanism};
    let out = tmp_dir("est");
    let data: sptmle::data::Dataset<f64> =
        generate(&DgpSpec::new(TreatmentMechanism::Linear), 120, 11);
    let csv_path = out.join("data.csv");
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    std::fs::write(&csv_path, &buf).unwrap();

    let o = run(&[
        "estimate",
        csv_path.to_str().unwrap(),
        "--estimators",
        "tmle,sp_tmle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("estimator,psi_hat,se,"));
    assert!(stdout.contains("\ntmle,") || stdout.contains("tmle,"));
    assert!(out.join("estimates.csv").exists());
    // psi estimates must be probabilities
    for line in stdout.lines().skip(1) {
        let psi: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&psi), "psi out of range: {line}");
    }
}

#[test]
fn verify_passes_by_default_and_fails_at_zero_tol() {
    let out = tmp_dir("verify");
    let base = [
        "verify", "--dgp", "linear", "--n", "200", "--seed", "4", "--out",
    ];
    let mut args: Vec<&str> = base.to_vec();
    let out_s = out.to_str().unwrap();
    args.push(out_s);
    let o = run(&args);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(
        o.status.code(),
        Some(0),
        "stdout: {stdout} stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout.contains("check,value,threshold"));
    assert!(stdout.contains("finite_difference_max_discrepancy"));

    let mut strict = args.clone();
    strict.extend_from_slice(&["--tol", "0"]);
    let o2 = run(&strict);
    assert_eq!(o2.status.code(), Some(2), "zero tolerance must fail");
}

#[test]
fn simulate_rerun_is_byte_identical() {
    let out1 = tmp_dir("det1");
    let out2 = tmp_dir("det2");
    let args = |out: &str| {
        vec![
            "simulate".to_string(),
            "--dgp".into(),
            "sinusoidal".into(),
            "--n".into(),
            "60".into(),
            "--reps".into(),
            "3".into(),
            "--seed".into(),
            "12".into(),
            "--estimators".into(),
            "tmle".into(),
            "--out".into(),
            out.to_string(),
        ]
    };
    let o1 = Command::new(bin())
        .args(args(out1.to_str().unwrap()))
        .output()
        .unwrap();
    let o2 = Command::new(bin())
        .args(args(out2.to_str().unwrap()))
        .output()
        .unwrap();
    assert!(o1.status.success() && o2.status.success());
    assert_eq!(
        read(&out1.join("summary.csv")),
        read(&out2.join("summary.csv"))
    );
    assert_eq!(
        read(&out1.join("replicates.csv")),
        read(&out2.join("replicates.csv"))
    );
}
