use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

/// Runs with orders capped at 512 to keep accounting cheap.
fn run(dir: &Path, args: &[&str]) -> Output {
    run_with_orders(dir, args, Some("512"))
}

fn run_with_orders(dir: &Path, args: &[&str], lambda_max: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dpsgmcmc"));
    cmd.args(args).current_dir(dir).env_remove("DPSGMCMC_LAMBDA_MAX");
    if let Some(max) = lambda_max {
        cmd.env("DPSGMCMC_LAMBDA_MAX", max);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn account_without_sampling_pays_only_the_tail() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["account", "--q", "0", "--sigma", "2", "--t", "100", "--delta", "1e-5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lambda = field(&text, "lambda");
    assert_eq!(lambda, 512.0);
    assert_eq!(field(&text, "epsilon"), -(1e-5f64.ln()) / lambda);
    let again = run(dir.path(), &["account", "--q", "0", "--sigma", "2", "--t", "100", "--delta", "1e-5"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn account_of_default_step_schedule_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["account", "--n", "50000", "--tau", "224", "--t", "10000", "--eta0", "0.1", "--schedule", "power"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(field(&stdout(&o), "epsilon") <= 0.2);
}

#[test]
fn invalid_and_infeasible_inputs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["account", "--q", "0.1", "--sigma", "0.5", "--t", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sigma >= 1") && err.contains("q < 1/16"), "{err}");
    let o = run(dir.path(), &["bound", "--n", "1000", "--t", "10", "--epsilon", "0.001", "--q", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["bound", "--t", "10"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), r#"{"epsilonn": 1}"#).unwrap();
    assert_eq!(run(dir.path(), &["bound", "--config", "bad.json"]).status.code(), Some(2));
}

#[test]
fn bound_reports_baseline_and_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bound", "--n", "50000", "--t", "10000", "--epsilon", "0.1", "--delta", "1e-5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((field(&text, "eta_wang") / 1.54e-6 - 1.0).abs() < 0.1);
    assert!(field(&text, "eta1") > 100.0 * field(&text, "eta_wang"));
    assert!(text.contains("operative=pass"));
    assert_eq!(text.lines().filter(|l| l.starts_with("t=")).count(), 2);
}

#[test]
fn json_config_matches_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["bound", "--n", "20000", "--t", "200", "--epsilon", "0.5", "--delta", "1e-5", "--clip-l", "2"];
    let by_flags = run(dir.path(), &flags);
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"command": "bound", "n": 20000, "t": 200, "epsilon": 0.5, "delta": 1e-5, "clip-l": 2.0}"#,
    )
    .unwrap();
    let by_file = run(dir.path(), &["--config", "c.json"]);
    assert!(by_flags.status.success() && by_file.status.success());
    assert_eq!(by_flags.stdout, by_file.stdout);

    let over = run(dir.path(), &["--config", "c.json", "--epsilon", "0.8"]);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("dpsgmcmc.config.json")).unwrap()).unwrap();
    assert_eq!(sidecar["epsilon"], 0.8);
    assert_eq!(sidecar["clip-l"], 2.0);
    assert_ne!(over.stdout, by_file.stdout);
}

#[test]
fn fig1_has_one_row_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    // epsilon = 0.02 needs orders beyond 512.
    let o = run_with_orders(dir.path(), &["experiment", "--figure", "fig1", "--out", "fig1.csv"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10);
    assert!(csv.starts_with("epsilon,eta1_decreasing,eta_fixed,eta_wang"));
    assert!(dir.path().join("fig1.csv.config.json").exists());
}

#[test]
fn two_iterations_with_burn_in_one_give_one_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["sample", "--t", "2", "--burn-in", "1", "--eta0", "0.1", "--out", "s.csv"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,eta_t,theta_0");
    assert_eq!(lines.len(), 2);
}

#[test]
fn sample_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, seed: &'static str| {
        [
            "sample", "--model", "logistic", "--n", "500", "--features", "3", "--t", "200", "--eta0", "0.05",
            "--dynamics", "sghmc", "--seed", seed, "--out", out,
        ]
    };
    for (out, seed) in [("a.csv", "7"), ("b.csv", "7"), ("c.csv", "8")] {
        assert!(run(dir.path(), &args(out, seed)).status.success());
    }
    let p = |f: &str| dir.path().join(f);
    assert_eq!(sha(&p("a.csv")), sha(&p("b.csv")));
    assert_ne!(sha(&p("a.csv")), sha(&p("c.csv")));
}

#[test]
fn sample_reads_dataset_csv() {
    let dir = tempfile::tempdir().unwrap();
    dpsgmcmc::data::synthetic_gaussian(300, 2.0, 1.0, 1)
        .save_csv(dir.path().join("obs.csv"))
        .unwrap();
    let o = run(dir.path(), &["sample", "--data", "obs.csv", "--t", "50", "--eta0", "0.1", "--q", "0.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 1 + 45);
}
