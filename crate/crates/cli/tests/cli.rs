//! End-to-end tests of the `sarcue` binary against the bundled fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sarcue")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn stats_prints_split_counts() {
    let output = run(&["stats", "--dataset", fixture("demo20.jsonl").to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("demo20"), "{text}");
    assert!(text.contains("12"), "{text}");
    assert!(text.contains("6"), "{text}");
}

#[test]
fn missing_dataset_is_a_config_error_naming_the_field() {
    let output = run(&["stats", "--dataset", "does_not_exist.jsonl"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("--dataset"), "{}", stderr(&output));
}

#[test]
fn run_coc_on_fixture_backend_writes_reports() {
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "run",
        "--strategy",
        "coc",
        "--dataset",
        fixture("demo20.jsonl").to_str().unwrap(),
        "--backend",
        "fixture",
        "--runs",
        "2",
        "--seeds",
        "1,2",
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(out.path().join("report.csv").exists());
    assert!(out.path().join("report_coc_demo20_k0.json").exists());
}

#[test]
fn invalid_boc_arity_fails_preflight() {
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "run",
        "--strategy",
        "boc",
        "--dataset",
        fixture("demo20.jsonl").to_str().unwrap(),
        "--q",
        "11",
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("q=11"), "{}", stderr(&output));
    // nothing written before the failure
    assert!(!out.path().join("report.csv").exists());
}

#[test]
fn unknown_strategy_and_backend_are_config_errors() {
    let output = run(&[
        "run",
        "--strategy",
        "tree",
        "--dataset",
        fixture("demo20.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("--strategy"));

    let output = run(&[
        "run",
        "--strategy",
        "io",
        "--dataset",
        fixture("demo20.jsonl").to_str().unwrap(),
        "--backend",
        "nonexistent",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("--backend"));
}

#[test]
fn train_toc_is_deterministic_and_rejects_bad_lr() {
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    let dataset = fixture("demo20.jsonl");
    let base = [
        "train-toc",
        "--dataset",
        dataset.to_str().unwrap(),
        "--backend",
        "fixture",
        "--seed",
        "3",
        "--epochs",
        "30",
        "--toc-dims",
        "3,3,3",
    ];
    let mut args_a: Vec<&str> = base.to_vec();
    args_a.extend(["--out-dir", out_a.path().to_str().unwrap()]);
    let output = run(&args_a);
    assert!(output.status.success(), "{}", stderr(&output));

    let mut args_b: Vec<&str> = base.to_vec();
    args_b.extend(["--out-dir", out_b.path().to_str().unwrap()]);
    run(&args_b);

    let model_a = std::fs::read(out_a.path().join("toc_model.json")).unwrap();
    let model_b = std::fs::read(out_b.path().join("toc_model.json")).unwrap();
    assert_eq!(model_a, model_b, "same seed must give identical parameter files");

    let output = run(&[
        "train-toc",
        "--dataset",
        dataset.to_str().unwrap(),
        "--lr",
        "-0.5",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("--lr"));
}

#[test]
fn ablate_writes_report_for_removed_category() {
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "ablate",
        "--remove",
        "linguistic",
        "--strategy",
        "boc",
        "--dataset",
        fixture("demo20.jsonl").to_str().unwrap(),
        "--runs",
        "2",
        "--seeds",
        "1,2",
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let report = std::fs::read_to_string(out.path().join("report_boc_demo20_k0.json")).unwrap();
    assert!(report.contains("\"ablate\": \"linguistic\""));
    // traces were persisted and never mention a linguistic cue
    let traces =
        std::fs::read_to_string(out.path().join("traces/traces_boc_demo20_k0_run1.jsonl"))
            .unwrap();
    for name in ["keywords", "rhetorical devices", "language style"] {
        assert!(!traces.contains(name), "{name} leaked");
    }
}

#[test]
fn ablate_rejects_non_pool_strategy() {
    let output = run(&[
        "ablate",
        "--remove",
        "emotional",
        "--strategy",
        "io",
        "--dataset",
        fixture("demo20.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn report_command_combines_and_attaches_significance() {
    let out = tempfile::tempdir().unwrap();
    let dataset = fixture("demo20.jsonl");
    for strategy in ["io", "boc"] {
        let output = run(&[
            "run",
            "--strategy",
            strategy,
            "--dataset",
            dataset.to_str().unwrap(),
            "--out-dir",
            out.path().to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{}", stderr(&output));
    }
    let combined = tempfile::tempdir().unwrap();
    let io_report = out.path().join("report_io_demo20_k0.json");
    let boc_report = out.path().join("report_boc_demo20_k0.json");
    let inputs = format!("{},{}", io_report.display(), boc_report.display());
    let output = run(&[
        "report",
        "--inputs",
        &inputs,
        "--baseline",
        "io",
        "--out-dir",
        combined.path().to_str().unwrap(),
        "--chart-data",
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let csv_text = std::fs::read_to_string(combined.path().join("report.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 3);
    let boc_row = csv_text.lines().find(|l| l.starts_with("boc")).unwrap();
    let p_value = boc_row.split(',').next_back().unwrap();
    assert!(!p_value.is_empty(), "significance column must be filled: {boc_row}");
    assert!(combined.path().join("error_rates.csv").exists());
}

#[test]
fn replay_from_emitted_report_config_reproduces_the_run() {
    let out = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let dataset = fixture("demo20.jsonl");
    let args = [
        "run",
        "--strategy",
        "goc",
        "--dataset",
        dataset.to_str().unwrap(),
        "--runs",
        "2",
        "--seeds",
        "4,5",
        "--cache-dir",
        cache.path().to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ];
    let output = run(&args);
    assert!(output.status.success(), "{}", stderr(&output));
    let report_path = out.path().join("report_goc_demo20_k0.json");
    let first = std::fs::read(&report_path).unwrap();

    // replay purely from the report's config block against the same cache
    let output = run(&["run", "--config", report_path.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    let second = std::fs::read(&report_path).unwrap();
    assert_eq!(first, second, "replayed report must be byte-identical");
}
