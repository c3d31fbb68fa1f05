use std::process::{Command, Output};

fn reactorkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reactorkit")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    format!("{}/../core/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn timer_script_replays_full_scenario() {
    let o = reactorkit(&["timer", "--script", &scenario("timer_fake.txt")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("< timer display=00 state=ringing ringing=true button=stop"));
}

#[test]
fn counter_script_passes() {
    let o = reactorkit(&["counter", "--script", &scenario("counter.txt")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn demo_script_runs_mixed_apps() {
    let o = reactorkit(&["demo", "--script", &scenario("prime.txt")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn prime_async_reports_verdict() {
    let o = reactorkit(&["prime", "--n", "1013", "--mode", "async"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict=prime"), "{}", stdout(&o));
}

#[test]
fn lab_enumerate_prints_six() {
    let o = reactorkit(&["lab", "enumerate"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("6 schedules, 4 lose an update"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(reactorkit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(reactorkit(&["prime", "--n", "x"]).status.code(), Some(2));
    assert_eq!(reactorkit(&["timer", "--script", "/nonexistent/file"]).status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.txt");
    std::fs::write(&p, "expect timer.display=42\n").unwrap();
    let o = reactorkit(&["timer", "--script", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILED line 1"));
}

#[test]
fn bad_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.conf");
    std::fs::write(&p, "prime.slots = 0\n").unwrap();
    let o = reactorkit(&["serve", "--stdio", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
