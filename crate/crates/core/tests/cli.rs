use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ppdr::dataset::{read_archive, read_matrix};
use ppdr::evaluate::ExperimentReport;

fn ppdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppdr"))
        .args(args)
        .env_remove("PPDR_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "--dataset",
    "synthetic",
    "--per-combination",
    "20",
    "--seeds",
    "0",
    "--folds",
    "3",
    "--c",
    "1,10",
    "--svm-sigma",
    "0.5,1",
];

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    ppdr(&args)
}

#[test]
fn help_documents_every_run_flag() {
    let help = stdout(&ppdr(&["run", "--help"]));
    for flag in [
        "--config",
        "--dataset",
        "--archive",
        "--data-dir",
        "--utility",
        "--privacy",
        "--profile",
        "--seed",
        "--seeds",
        "--jobs",
        "--out",
        "--per-combination",
        "--method",
        "--k",
        "--rho0",
        "--rho1",
        "--rho1p",
        "--lambda",
        "--alpha",
        "--tau",
        "--max-iters",
        "--retries",
        "--c",
        "--svm-sigma",
        "--folds",
        "--sanitizer-sigma",
        "--sanitizer-folds",
        "--release",
    ] {
        assert!(help.contains(flag), "run --help lacks {flag}");
    }
    assert!(help.contains("PPDR_DATA_DIR"));
    assert!(stdout(&ppdr(&["reproduce", "--help"])).contains("--table"));
}

#[test]
fn unknown_table_is_a_usage_error() {
    let o = ppdr(&["reproduce", "--table", "9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown table 9"));
}

#[test]
fn missing_raw_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("nowhere");
    let o = ppdr(&[
        "prepare",
        "--dataset",
        "bank",
        "--data-dir",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bank-full.csv"), "{}", stderr(&o));
}

#[test]
fn real_dataset_without_data_dir_is_a_usage_error() {
    let o = ppdr(&["run", "--dataset", "har"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("PPDR_DATA_DIR"));
}

#[test]
fn prepare_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let digest = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = ppdr(&[
            "prepare",
            "--dataset",
            "synthetic",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(text.contains("training"));
        text.lines()
            .find(|l| l.starts_with("sha256 "))
            .unwrap()
            .to_string()
    };
    let a = digest("a", "42");
    let b = digest("b", "42");
    let c = digest("c", "43");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let archive = read_archive(&dir.path().join("a")).unwrap();
    // 60 rows per combination split 2:1:2 over 3 × 2 combinations
    assert_eq!(archive.splits.training.n_rows(), 144);
    assert_eq!(archive.splits.testing.n_rows(), 72);
    assert_eq!(archive.splits.adversary.n_rows(), 144);
}

#[test]
fn negative_rho_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(
        dir.path(),
        &["--method", "jupa", "--rho1=-1", "--rho1p", "1"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("must be >= 0"), "{}", stderr(&o));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"dataset": "synthetic", "learning-rate": 0.1}"#).unwrap();
    let o = ppdr(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning-rate"));
}

#[test]
fn single_method_run_writes_a_one_row_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(
        dir.path(),
        &["--method", "jupa", "--rho1", "1", "--rho1p", "1"],
    );
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", stderr(&o));
    let report: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].label, "JUPA (ρ1=1, ρ1'=1)");
    assert!(fs::read_to_string(dir.path().join("report.txt"))
        .unwrap()
        .contains("JUPA (ρ1=1, ρ1'=1)"));
}

#[test]
fn config_file_and_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"dataset": "synthetic", "per-combination": 20, "seeds": [0], "folds": 3, "c": [1, 10],
            "svm-sigma": [0.5, 1], "method": ["dca"]}"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = ppdr(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", stderr(&o));
    let o = run_small(&b, &["--method", "dca"]);
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(b.join("report.json")).unwrap()
    );
}

#[test]
fn worker_count_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    run_small(&one, &["--method", "pca,dca", "--jobs", "1"]);
    run_small(&two, &["--method", "pca,dca", "--jobs", "3"]);
    assert_eq!(
        fs::read(one.join("report.json")).unwrap(),
        fs::read(two.join("report.json")).unwrap()
    );
    assert_eq!(
        fs::read(one.join("report.txt")).unwrap(),
        fs::read(two.join("report.txt")).unwrap()
    );
}

#[test]
fn release_holds_features_only_with_targets_in_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    run_small(dir.path(), &["--method", "dca", "--k", "2", "--release"]);
    let release = dir.path().join("release");
    let features = read_matrix(&release.join("dca-seed0.mat")).unwrap();
    assert_eq!(features.ncols(), 2);
    assert_eq!(features.nrows(), 24);
    let targets: Vec<usize> =
        serde_json::from_str(&fs::read_to_string(release.join("dca-seed0.targets.json")).unwrap())
            .unwrap();
    assert_eq!(targets.len(), 24);
}

#[test]
fn run_reads_a_prepared_archive() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("archive");
    let o = ppdr(&[
        "prepare",
        "--dataset",
        "synthetic",
        "--per-combination",
        "20",
        "--out",
        archive.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let from_archive = dir.path().join("x");
    let from_raw = dir.path().join("y");
    let args = |out: &Path| {
        vec![
            "run".to_string(),
            "--archive".into(),
            archive.to_str().unwrap().into(),
            "--seeds".into(),
            "0".into(),
            "--folds".into(),
            "3".into(),
            "--c".into(),
            "1,10".into(),
            "--svm-sigma".into(),
            "0.5,1".into(),
            "--method".into(),
            "dca".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let o = Command::new(env!("CARGO_BIN_EXE_ppdr"))
        .args(args(&from_archive))
        .output()
        .unwrap();
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", stderr(&o));
    run_small(&from_raw, &["--method", "dca"]);
    assert_eq!(
        fs::read(from_archive.join("report.json")).unwrap(),
        fs::read(from_raw.join("report.json")).unwrap()
    );
}
