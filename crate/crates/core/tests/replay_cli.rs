//! The replay binary as a user runs it.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn replay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cosearch-replay"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn replays_every_scenario_in_every_mode() {
    let out = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("scenarios");
    let run = replay(&["--corpus", corpus.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let names = files(out.path());
    assert_eq!(names.len(), 24);
    assert!(names.contains(&"joy-of-life.mode4.json".to_owned()));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("ok ")).count(), 24);
}

#[test]
fn single_mode_and_config_and_seed() {
    let out = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("scenarios");
    let config = fixtures().join("service.toml");
    let run = replay(&[
        "--corpus",
        corpus.to_str().unwrap(),
        "--mode",
        "3",
        "--config",
        config.to_str().unwrap(),
        "--seed-clock",
        "42",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let names = files(out.path());
    assert_eq!(names.len(), 6);
    assert!(names.iter().all(|n| n.ends_with(".mode3.json")));
}

#[test]
fn diff_reports_between_modes() {
    let out = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("scenarios");
    assert!(replay(&["--corpus", corpus.to_str().unwrap(), "--out", out.path().to_str().unwrap()])
        .status
        .success());
    let a = out.path().join("joy-of-life.mode1.json");
    let b = out.path().join("joy-of-life.mode4.json");
    let run = replay(&["--diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("effective_query: \"who is the lead actor\" -> \"lead actor of Joy of Life season 2\""));

    let same = replay(&["--diff", b.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(same.status.success());
    assert!(same.stdout.is_empty());
}

#[test]
fn bad_input_exits_with_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let run = replay(&["--corpus", "/definitely/not/here", "--out", out.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    let corpus = fixtures().join("scenarios");
    let run = replay(&["--corpus", corpus.to_str().unwrap(), "--mode", "7"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("mode"));
}

#[test]
fn malformed_scenario_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.json"), "{\n  \"id\": \"x\",\n  oops\n}\n").unwrap();
    let run = replay(&["--corpus", dir.path().to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("broken.json"), "{stderr}");
    assert!(stderr.contains(":3:"), "{stderr}");
}
