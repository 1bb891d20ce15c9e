use std::fs;
use std::path::Path;
use std::process::Command;

fn iscsc(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_iscsc"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, "vehicles = 2\nn_tx = 4\nparticles = 100\nao_max_iter = 5\nsa_max_iter = 3\nrandomization_samples = 10\n").unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_records_and_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for out in ["a", "b"] {
        let (code, err) = iscsc(&["simulate", "--config", &cfg, "--seed", "4", "--slots", "2", "--method", "greedy", "--out", out], dir.path());
        assert_eq!(code, 0, "{err}");
    }
    for file in ["records.jsonl", "results.csv", "config.toml"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let records = fs::read_to_string(dir.path().join("a/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 2);
}

#[test]
fn invalid_and_crowded_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "vehicles = 0\n").unwrap();
    fs::write(dir.path().join("unknown.toml"), "warp = 1\n").unwrap();
    fs::write(dir.path().join("crowded.toml"), "vehicles = 80\n").unwrap();
    for cfg in ["bad.toml", "unknown.toml", "crowded.toml"] {
        let (code, err) = iscsc(&["simulate", "--config", cfg, "--out", "o"], dir.path());
        assert_eq!(code, 2, "{cfg}: {err}");
    }
}

#[test]
fn missing_results_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = iscsc(&["report", "--out", "nowhere"], dir.path());
    assert_eq!(code, 1);
}

#[test]
fn closed_form_sweeps_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = iscsc(&["sweep", "--sweep", "latency", "--out", "l"], dir.path());
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("l/results.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("latency,linear-3000-bits,t_max_s,0.015,") && l.contains(",400000000.0,")));
    let before = fs::read_to_string(dir.path().join("l/summary.json")).unwrap();
    fs::remove_file(dir.path().join("l/summary.json")).unwrap();
    let (code, err) = iscsc(&["report", "--out", "l"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(fs::read_to_string(dir.path().join("l/summary.json")).unwrap(), before);
}

#[test]
fn track_bench_compares_three_filters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (code, err) = iscsc(&["track-bench", "--config", &cfg, "--seeds", "2", "--vehicles", "2", "--slots", "5", "--out", "t"], dir.path());
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("t/results.csv")).unwrap();
    for f in ["pf", "ekf", "ukf"] {
        assert_eq!(csv.lines().filter(|l| l.starts_with(&format!("tracking,{f},"))).count(), 2);
    }
}

#[test]
fn unknown_method_is_rejected_by_the_parser() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = iscsc(&["simulate", "--method", "best"], dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("unknown method"), "{err}");
}
