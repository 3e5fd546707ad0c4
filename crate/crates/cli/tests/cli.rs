use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multinav")).args(args).output().unwrap()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("house3.toml");
    let out = dir.path().join("run");
    let o = bin(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--crash",
        "leader:40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("violations=0"));
    for f in ["report.json", "messages.tsv", "trace.jsonl"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 4);

    let r = bin(&["replay", out.join("trace.jsonl").to_str().unwrap()]);
    assert!(r.status.success());
    assert!(stdout(&r).contains("checksums ok"));
}

#[test]
fn replay_of_a_damaged_trace_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    std::fs::write(&path, "{\"seq\":0}\n").unwrap();
    let r = bin(&["replay", path.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn validate_scenario_reports_clean_fixtures() {
    let o = bin(&["validate-scenario", scenarios().join("house6.scn").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("clean"));
}

#[test]
fn bad_crash_schedule_is_an_error() {
    let cfg = scenarios().join("house3.toml");
    let o = bin(&["run", "--config", cfg.to_str().unwrap(), "--crash", "nobody:x"]);
    assert_eq!(o.status.code(), Some(2));
}
