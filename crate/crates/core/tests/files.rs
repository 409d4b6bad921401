use std::fs;

use repo_contagion::engine::run_simulation;
use repo_contagion::output::write_timeseries;
use repo_contagion::scenario::{load_scenario, write_scenario, Scenario, ScenarioError};

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.scn");
    let mut s = Scenario::default();
    s.shock.p = 0.65;
    s.counts.mmfs = 100;
    fs::write(&path, write_scenario(&s)).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), s);
}

#[test]
fn missing_scenario_file_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("absent.scn");
    let err = load_scenario(&path).unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }));
    assert!(err.to_string().contains("absent.scn"));
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::default();
    s.counts.banks = 10;
    s.counts.hedge_funds = 20;
    s.counts.mmfs = 20;
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_timeseries(&run_simulation(&s, 21).unwrap(), &a).unwrap();
    write_timeseries(&run_simulation(&s, 21).unwrap(), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
