use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmtpair"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn run_with_missing_config_exits_2() {
    let out = run(&["run", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read config"));
}

#[test]
fn shipped_configs_validate() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = run(&["validate", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let body = std::fs::read_to_string(configs().join("quick.json")).unwrap().replace("[50]", "[5000]");
    std::fs::write(&cfg, body).unwrap();
    let out = run(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["validate", cfg.to_str().unwrap(), "--allow-large"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn repeated_runs_give_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("quick.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = run(&["--threads", threads, "run", cfg.to_str().unwrap(), "--seed", "42", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["summary.json", "samples.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(a.join("summary.json")).unwrap();
    assert!(summary.contains("\"master_seed\": 42"));
}

#[test]
fn report_checks_hash_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = configs().join("quick.json");
    assert_eq!(run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let json = run(&["report", out.to_str().unwrap()]);
    assert_eq!(json.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&json.stdout).contains("config_hash"));
    let csv = run(&["report", out.to_str().unwrap(), "--format", "csv"]);
    let text = String::from_utf8_lossy(&csv.stdout).to_string();
    assert!(text.lines().next().unwrap().contains("correlation"));
    assert_eq!(text.lines().count(), 4);

    let config_path = out.join("config.json");
    let tampered = std::fs::read_to_string(&config_path).unwrap().replace("\"master_seed\": 7", "\"master_seed\": 8");
    std::fs::write(&config_path, tampered).unwrap();
    let bad = run(&["report", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_directory_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("two.json");
    let body = std::fs::read_to_string(configs().join("quick.json")).unwrap().replace("[50]", "[20, 30]");
    std::fs::write(&cfg, body).unwrap();
    let out = dir.path().join("sweep");
    let o = run(&["sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for n in ["n20", "n30"] {
        assert!(out.join(n).join("summary.json").exists());
        assert!(out.join(n).join("samples.json").exists());
    }
    assert!(out.join("sweep.json").exists());
}
