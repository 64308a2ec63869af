use std::path::Path;
use std::process::{Command, Output};

fn secest(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secest"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const MITM: &str = "scenario = \"mitm\"\nhorizon = 60\n\n[measurements]\nn_y = 5\nextra = [1, 5]\n";

#[test]
fn missing_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = secest(&["run", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MITM).unwrap();
    let out = secest(&["run", "c.toml", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "window = 1\n").unwrap();
    assert_eq!(
        secest(&["run", "c.toml"], dir.path()).status.code(),
        Some(1)
    );
    std::fs::write(dir.path().join("d.toml"), "no_such_key = 3\n").unwrap();
    assert_eq!(
        secest(&["run", "d.toml"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn designed_closed_loop_corrects_two_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MITM).unwrap();
    let design = secest(&["design", "c.toml", "--out", "d"], dir.path());
    assert_eq!(
        design.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&design.stderr)
    );
    assert!(dir.path().join("d/gain.json").exists());

    let analyze = secest(&["analyze", "d/closed_loop.toml", "--q", "2"], dir.path());
    assert_eq!(analyze.status.code(), Some(0));
    let text = stdout(&analyze);
    assert!(text.contains("q_max = 2"), "{text}");
    assert!(text.contains("T* = 46"), "{text}");
    assert!(text.contains("window for q = 2: T = 46"), "{text}");
}

#[test]
fn single_sensor_eigenvectors_correct_nothing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        "A = [[0.5, 0.0], [0.0, 0.8]]\nC = [[1.0, 0.0], [0.0, 1.0]]\n",
    )
    .unwrap();
    let out = secest(&["analyze", "s.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("q_max = 0"));
}

#[test]
fn repeated_runs_write_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MITM).unwrap();
    for out in ["a", "b"] {
        let run = secest(&["run", "c.toml", "--seed", "7", "--out", out], dir.path());
        assert_eq!(
            run.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    for file in ["summary.json", "timeseries.csv", "attack_error_kf_se.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn mode_flag_limits_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MITM).unwrap();
    let run = secest(&["run", "c.toml", "--mode", "kf", "--out", "o"], dir.path());
    assert_eq!(run.status.code(), Some(0));
    assert!(dir.path().join("o/attack_error_kf.csv").exists());
    assert!(!dir.path().join("o/attack_error_se.csv").exists());
    let bad = secest(&["run", "c.toml", "--mode", "nonsense"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}
