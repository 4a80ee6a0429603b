//! The `laptop-dr` binary: verbs, flags, config merging and exit codes.

mod common;

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use laptop_dr::agent::synthetic_training_log;
use laptop_dr::bus::{BusHandle, RemoteBus};
use laptop_dr::power_model::{write_metrics_log, Os, PowerMode, PowerModel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_laptop-dr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_log(path: &Path, with_power: bool) {
    let samples = synthetic_training_log(Os::Ubuntu, PowerMode::Normal, 0.0695, 2500, 8);
    write_metrics_log(File::create(path).unwrap(), &samples, with_power).unwrap();
}

#[test]
fn fit_is_deterministic_and_eval_reads_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    write_log(&log, true);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&[
            "fit", "--log", log.to_str().unwrap(), "--os", "ubuntu", "--mode", "normal",
            "--out", out.to_str().unwrap(), "--seed", "5",
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        assert!(text(&o.stdout).contains("ubuntu"));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let model = PowerModel::from_json(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(model.seed, Some(5));

    let o = run(&["eval", "--model", a.to_str().unwrap(), "--log", log.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).lines().count(), 2);
}

#[test]
fn fit_without_power_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    write_log(&log, false);
    let out = dir.path().join("m.json");
    let o = run(&[
        "fit", "--log", log.to_str().unwrap(), "--os", "ubuntu", "--mode", "normal", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).starts_with("error:"));
    assert!(!out.exists());
}

#[test]
fn missing_options_and_unknown_terms_exit_2() {
    assert_eq!(run(&["fit"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    write_log(&log, true);
    let o = run(&[
        "subset-search", "--log", log.to_str().unwrap(), "--os", "ubuntu", "--mode", "normal", "--terms",
        "cpu,warp_drive",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
}

#[test]
fn config_file_supplies_options_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    write_log(&log, true);
    let cfg = dir.path().join("cv.json");
    fs::write(
        &cfg,
        serde_json::json!({ "log": log, "os": "ubuntu", "mode": "normal", "folds": 3 }).to_string(),
    )
    .unwrap();
    let o = run(&["cross-validate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    // header, three folds, mean
    assert_eq!(text(&o.stdout).lines().count(), 5);

    let o = run(&["cross-validate", "--config", cfg.to_str().unwrap(), "--folds", "4", "--seed", "2"]);
    assert!(o.status.success());
    assert_eq!(text(&o.stdout).lines().count(), 6);

    let o = run(&[
        "subset-search", "--config", cfg.to_str().unwrap(), "--terms", "cpu,mem,charging", "--max-size", "2",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("== 2 term(s) =="));
}

#[test]
fn live_verbs_reject_the_virtual_clock() {
    for verb in ["bus", "coordinator", "agent"] {
        let o = run(&[verb, "--virtual-clock"]);
        assert_eq!(o.status.code(), Some(2), "{verb}");
        assert!(text(&o.stderr).contains("--virtual-clock"));
    }
}

#[test]
fn bus_verb_serves_and_fit_publishes_to_it() {
    let dir = tempfile::tempdir().unwrap();
    let bus_log = dir.path().join("bus.jsonl");
    let mut child = bin()
        .args(["bus", "--listen", "127.0.0.1:0", "--log", bus_log.to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();

    let log = dir.path().join("log.csv");
    write_log(&log, true);
    let model = dir.path().join("m.json");
    let o = run(&[
        "fit", "--log", log.to_str().unwrap(), "--os", "ubuntu", "--mode", "normal", "--out",
        model.to_str().unwrap(), "--publish", &addr,
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));

    let client = RemoteBus::connect(addr.as_str()).unwrap();
    let sub = client.subscribe(&["models/#"], 1).unwrap();
    let env = sub.recv_timeout(std::time::Duration::from_secs(5)).unwrap().expect("model delivered");
    let published: PowerModel = env.decode().unwrap();
    assert_eq!(published.to_json(), fs::read_to_string(&model).unwrap());
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(fs::read_to_string(&bus_log).unwrap().contains("models/"));
}

#[test]
fn run_experiment_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let o = run(&["run-experiment", "--virtual-clock", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("average"));
    for f in ["report.json", "events.csv", "demand.csv", "status.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // header, five events, average
    assert_eq!(fs::read_to_string(out.join("events.csv")).unwrap().lines().count(), 7);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"format": 9, "turbine": {"lat": 0, "lon": 0}, "agents": []}"#).unwrap();
    let o = run(&["run-experiment", "--scenario", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("format") && err.contains("nothing to run"), "{err}");
}
