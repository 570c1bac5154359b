use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_oaival");

/// A `oaival simulate` child process, killed on drop.
struct Sim {
    child: Child,
    url: String,
}

impl Sim {
    fn start(faults: &[&str]) -> Self {
        let mut cmd = Command::new(BIN);
        cmd.args(["simulate", "--port", "0"]);
        for f in faults {
            cmd.args(["--fault", f]);
        }
        let mut child = cmd
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let url = line
            .split_whitespace()
            .find(|w| w.starts_with("http://"))
            .unwrap_or_else(|| panic!("no URL in {line:?}"))
            .to_string();
        Self { child, url }
    }
}

impl Drop for Sim {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn oaival(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("OAIVAL_LOG", dir.join("log.jsonl"))
        .env("OAIVAL_REGISTRY", dir.join("registry.json"))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_clean_simulator_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sim = Sim::start(&[]);
    let out = oaival(dir.path(), &["validate", &sim.url]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).starts_with("Outcome: ROBUSTLY VALID"));
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn empty_base_url_is_an_intake_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = oaival(dir.path(), &["validate", ""]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).contains("No base URL"));
    let out = oaival(dir.path(), &["validate", "not a url"]);
    assert_eq!(out.status.code(), Some(5));
    let out = oaival(dir.path(), &["stats", "--output", "structured"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["intake"]["total"], 2);
    assert_eq!(v["intake"]["rows"][0]["count"], 1);
}

#[test]
fn register_gates_by_level() {
    let dir = tempfile::tempdir().unwrap();
    let sim = Sim::start(&["ignore_bad_args"]);
    let out = oaival(dir.path(), &["register", &sim.url, "--level", "robust"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("NotEligible"), "{}", stderr(&out));
    let out = oaival(dir.path(), &["register", &sim.url, "--level", "basic"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = oaival(dir.path(), &["browse"]);
    assert!(stdout(&out).contains(&sim.url));
    assert!(stdout(&out).contains("basic"));
    let out = oaival(dir.path(), &["browse", "--output", "structured"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["entries"][0]["compliance_level"], "basic");
}

#[test]
fn structured_report_for_every_outcome() {
    let dir = tempfile::tempdir().unwrap();
    for (faults, code, status) in [
        (&[][..], 0, "robustly-valid"),
        (&["ignore_bad_args"][..], 2, "valid-excluding-exceptions"),
        (&["empty_window"][..], 3, "failed"),
        (&["bad_admin_email"][..], 4, "aborted"),
    ] {
        let sim = Sim::start(faults);
        let out = oaival(
            dir.path(),
            &["validate", &sim.url, "--output", "structured"],
        );
        assert_eq!(out.status.code(), Some(code), "{faults:?}");
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["outcome"]["status"], status);
        assert!(v["transcript"].as_array().is_some_and(|t| !t.is_empty()));
    }
    let out = oaival(dir.path(), &["stats"]);
    assert!(stdout(&out).contains("Bad admin email address"));
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oaival(dir.path(), &["frobnicate"]).status.code(), Some(64));
    assert_eq!(oaival(dir.path(), &["validate"]).status.code(), Some(64));
    assert_eq!(
        oaival(dir.path(), &["simulate", "--fault", "nope"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        oaival(dir.path(), &["register", "http://x/oai", "--level", "gold"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(oaival(dir.path(), &["--help"]).status.code(), Some(0));
}
