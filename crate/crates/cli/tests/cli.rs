use std::path::Path;
use std::process::{Command, Output};

use quantlearn_cli::report::{audit_rows, read_rows};

fn quantlearn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quantlearn"))
        .args(args)
        .current_dir(dir)
        .env("QUANTLEARN_CACHE", dir.join("cache"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, train: &str, test: &str, methods: &str) -> std::path::PathBuf {
    let json = format!(
        r#"{{
  "datasets": [{{"name": "toy", "train": "{train}", "test": "{test}"}}],
  "methods": {methods},
  "learners": ["LR"],
  "losses": ["AE", "A"],
  "validation": {{"grid": [0.2, 0.5, 0.8], "samples_per_point": 3, "sample_size": 40}},
  "test": {{"grid": [0.0, 0.25, 0.5, 0.75, 1.0], "samples_per_point": 4, "sample_size": 50}},
  "c_grid": [0.1, 10.0],
  "repetitions": 2,
  "seed": 5,
  "output_dir": "out"
}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn synth(dir: &Path) {
    let o = quantlearn(&["synth", "--out", "data", "--name", "toy", "--n-docs", "400", "--prevalence", "0.6"], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn protocol_report_and_ttest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    write_config(dir, "data/toy_train.tsv", "data/toy_test.tsv", r#"["CC", "ACC", "MLPE"]"#);

    let o = quantlearn(&["prepare", "--config", "config.json"], dir);
    assert!(o.status.success());
    assert!(stdout(&o).contains("toy"));
    assert!(std::fs::read_dir(dir.join("cache")).unwrap().count() == 1);

    let o = quantlearn(&["protocol", "--config", "config.json", "--jobs", "2"], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let raw = dir.join("out/raw.csv");
    let rows = read_rows(&raw).unwrap();
    // 5 grid points x 4 samples per (method, learner, loss, repetition):
    // CC 2 losses x 1 rep, ACC 2 losses x 2 reps, MLPE 1
    assert_eq!(rows.len(), 20 * (2 + 4 + 1));
    audit_rows(&rows, 50, 1e-12).unwrap();
    let mlpe: Vec<f64> = rows.iter().filter(|r| r.method == "MLPE").map(|r| r.estimated_prevalence).collect();
    assert_eq!(mlpe.len(), 20);
    assert!(mlpe.iter().all(|&p| p == mlpe[0]));
    for f in ["summary.csv", "summary.txt", "ttest.csv", "ttest_matrix_ae.csv", "ttest_matrix_rae.csv", "manifest.json"] {
        assert!(dir.join("out").join(f).exists(), "{f} missing");
    }
    assert!(dir.join("out/selection/toy__ACC__LR__AE__r001.json").exists());

    // resume: a removed part is recomputed, the rest reused, bytes unchanged
    let before = std::fs::read(&raw).unwrap();
    std::fs::remove_file(dir.join("out/parts/toy__ACC__LR__A__r001.csv")).unwrap();
    let o = quantlearn(&["protocol", "--config", "config.json"], dir);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 combinations run, 6 resumed"));
    assert_eq!(std::fs::read(&raw).unwrap(), before);

    let o = quantlearn(&["report", "--out", "out"], dir);
    assert!(o.status.success());
    assert!(stdout(&o).contains("MLPE"));

    let o = quantlearn(&["ttest", "out/raw.csv", "out/raw.csv", "--loss-a", "AE", "--loss-b", "A"], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("ACC") && text.contains("CC"), "{text}");
    // without a loss filter the pairing is ambiguous
    let o = quantlearn(&["ttest", "out/raw.csv", "out/raw.csv"], dir);
    assert!(!o.status.success());
}

#[test]
fn seed_override_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    write_config(dir, "data/toy_train.tsv", "data/toy_test.tsv", r#"["CC"]"#);
    for (seed, out) in [("5", "a"), ("5", "b"), ("6", "c")] {
        let o = quantlearn(&["protocol", "--config", "config.json", "--seed", seed, "--out", out], dir);
        assert!(o.status.success());
    }
    let read = |d: &str| std::fs::read(dir.join(d).join("raw.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn failed_combinations_give_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    // a single positive document cannot feed both halves of the split
    let mut lines = vec!["1\tgood words here".to_string()];
    lines.extend((0..40).map(|i| format!("0\tplain text number {i} here")));
    std::fs::write(dir.join("data/one_pos.tsv"), lines.join("\n")).unwrap();
    write_config(dir, "data/one_pos.tsv", "data/toy_test.tsv", r#"["CC", "MLPE"]"#);
    let o = quantlearn(&["protocol", "--config", "config.json"], dir);
    assert!(!o.status.success());
    let failures = std::fs::read_to_string(dir.join("out/failures.csv")).unwrap();
    // AE selection needs positive validation samples; accuracy selection does not
    assert!(failures.contains("toy__CC__LR__AE__r000"), "{failures}");
    assert!(!failures.contains("toy__CC__LR__A__r000"), "{failures}");
    // the run went on with the other combinations
    let rows = read_rows(&dir.join("out/raw.csv")).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.optimized_for != "AE"));
    assert_eq!(rows.iter().filter(|r| r.method == "MLPE").count(), 20);
}

#[test]
fn bad_inputs_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, "missing_train.tsv", "missing_test.tsv", r#"["CC"]"#);
    let o = quantlearn(&["protocol", "--config", "config.json"], dir);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));

    std::fs::write(dir.join("bad.tsv"), "1\tok\n2\tnope\n").unwrap();
    std::fs::write(dir.join("good.tsv"), "1\tok\n0\tfine\n").unwrap();
    write_config(dir, "bad.tsv", "good.tsv", r#"["CC"]"#);
    let o = quantlearn(&["prepare", "--config", "config.json"], dir);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown label") && err.contains("line 2"), "{err}");
}
