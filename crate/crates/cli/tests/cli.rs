use std::path::Path;
use std::process::{Command, Output};

use conav::metrics::TrialRecord;
use conav::vehicle::Pose2D;
use conav::world::{Extents, GoalPoint, Obstacle, Rect, ScenarioSpec};

fn conav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conav")).args(args).output().unwrap()
}

fn repo_scenarios() -> String {
    format!("{}/../../scenarios", env!("CARGO_MANIFEST_DIR"))
}

/// A short room with one board, so a 30-trial batch stays quick.
fn write_room(dir: &Path) {
    let spec = ScenarioSpec {
        name: "room".into(),
        resolution: 0.05,
        extents: Extents { width: 8.0, height: 3.0 },
        obstacles: vec![
            Obstacle::rect(Rect::new(0.0, 0.0, 8.0, 0.1)),
            Obstacle::rect(Rect::new(0.0, 2.9, 8.0, 3.0)),
            Obstacle::rect(Rect::new(4.0, 0.1, 4.1, 1.0)),
        ],
        start: Pose2D::new(1.0, 1.5, 0.0),
        goal: GoalPoint { x: 7.0, y: 1.5 },
        goal_tolerance: 0.5,
        timeout_s: 30.0,
        preference_regions: vec![],
    };
    spec.save(dir.join("room.json")).unwrap();
    std::fs::write(
        dir.join("batch.json"),
        r#"{"scenario": {"file": "room.json"}, "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], "repetitions": 1}"#,
    )
    .unwrap();
}

fn json_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    names
}

#[test]
fn single_trial_writes_one_record() {
    let out = tempfile::tempdir().unwrap();
    let o = conav(&[
        "trial",
        "--scenario",
        "zigzag25",
        "--scenarios",
        &repo_scenarios(),
        "--mode",
        "autonomous",
        "--user",
        "idle",
        "--seed",
        "7",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json_files(out.path()), vec!["autonomous-idle-s7-r0.json"]);
    let rec = TrialRecord::load(out.path().join("autonomous-idle-s7-r0.json")).unwrap();
    assert_eq!((rec.seed, rec.scenario_name.as_str()), (7, "zigzag25"));
    let csv = std::fs::read_to_string(out.path().join("autonomous-idle-s7-r0.trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), rec.samples.len() + 1);
}

#[test]
fn unknown_names_are_usage_errors() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    for args in [
        ["trial", "--mode", "hover", "--user", "idle", "--out", o],
        ["trial", "--mode", "manual", "--user", "robot", "--out", o],
    ] {
        let res = conav(&args);
        assert_eq!(res.status.code(), Some(2), "{args:?}");
    }
    let res = conav(&["trial", "--scenario", "nowhere", "--mode", "manual", "--user", "idle", "--out", o]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown scenario"));
    assert!(json_files(out.path()).is_empty());
}

#[test]
fn batch_then_report() {
    let dir = tempfile::tempdir().unwrap();
    write_room(dir.path());
    let cfg = dir.path().join("batch.json");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    let o = conav(&["batch", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap(), "--jobs", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json_files(&out_a.join("records")).len(), 30);
    let summary = std::fs::read_to_string(out_a.join("summary.csv")).unwrap();
    let modes: std::collections::BTreeSet<&str> =
        summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes.into_iter().collect::<Vec<_>>(), vec!["autonomous", "manual", "shared"]);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with(&std::fs::read_to_string(out_a.join("table.txt")).unwrap()));

    // the worker count does not change any output
    let o = conav(&["batch", "--config", cfg.to_str().unwrap(), "--out", out_b.to_str().unwrap(), "--jobs", "1"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out_b.join("summary.csv")).unwrap(), summary.as_bytes());

    // re-summarizing the written records gives the same bytes
    let again = dir.path().join("again.csv");
    let o = conav(&["report", "--in", out_a.to_str().unwrap(), "--csv", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&again).unwrap(), summary.as_bytes());
}

#[test]
fn report_on_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = conav(&["report", "--in", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}
