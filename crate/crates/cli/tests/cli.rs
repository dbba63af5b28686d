//! End-to-end tests of the `nrule` binary. Golden files live in `tests/golden`;
//! set `UPDATE_GOLDEN=1` to regenerate them.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn nrule(args: &[&str]) -> Output {
    nrule_env(args, &[])
}

fn nrule_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nrule"));
    cmd.args(args).current_dir(repo_root()).env_remove("NRULE_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, expected, "output drifted from {name}");
}

#[test]
fn list_matches_golden() {
    let o = nrule(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    golden("list.txt", &stdout(&o));
}

#[test]
fn counter_event_log_csv() {
    let o = nrule(&["run", "--builtin", "counter", "--n", "3", "--seed", "7", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("trajectory,event_index,time,chosen,outcome,s_before,s_after\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 4);
    golden("counter_n3_seed7.csv", &text);
}

#[test]
fn spin_summary_has_no_reductions() {
    let o = nrule(&["run", "--builtin", "spin_continuous", "--n", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["summary"]["reduction_events"], 0);
    assert_eq!(v["config"]["n"], 2);
    assert_eq!(v["config"]["seed"], 0);
    assert_eq!(v["config"]["format"], "json");
    assert!(v.get("trajectories").is_none());
    golden("spin_continuous_n2.json", &text);
}

#[test]
fn default_config_values() {
    let o = nrule(&["run", "--builtin", "neutron_decay"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["config"]["n"], 1);
    assert_eq!(v["config"]["dt"], 1e-3);
    assert_eq!(v["config"]["flags"]["phantom_prune"], false);
    assert_eq!(v["config"]["flags"]["noop_resets_trigger"], true);
}

#[test]
fn flag_passthrough_and_trajectories() {
    let o = nrule(&[
        "run", "--builtin", "terminal_observation", "--n", "2", "--prune-phantoms", "--noop-no-reset", "--trajectories",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["config"]["flags"]["phantom_prune"], true);
    assert_eq!(v["config"]["flags"]["noop_resets_trigger"], false);
    assert_eq!(v["trajectories"].as_array().unwrap().len(), 2);
}

#[test]
fn worker_count_does_not_change_output() {
    let args = ["run", "--builtin", "parallel", "--n", "24", "--seed", "3", "--format", "csv"];
    let one = nrule_env(&args, &[("NRULE_WORKERS", "1")]);
    let three = nrule_env(&args, &[("NRULE_WORKERS", "3")]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(stdout(&one), stdout(&three));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let o = nrule(&["run", "--builtin", "counter", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["summary"]["reduction_events"], 4);
}

#[test]
fn validate_clean_file() {
    let o = nrule(&["validate", "corpus/parallel.scn"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stderr.is_empty(), "{}", stderr(&o));
}

#[test]
fn validation_errors_exit_one_with_positions() {
    let o = nrule(&["validate", "corpus/invalid/dangling_edge.scn"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dangling_edge.scn:12:1: error[DANGLING_REFERENCE]"), "{}", stderr(&o));

    let o = nrule(&["run", "--file", "corpus/invalid/arrow_with_driver.scn"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("DRIVER_MISMATCH"));
}

#[test]
fn flag_errors_exit_one() {
    for args in [
        vec!["run"],
        vec!["run", "--builtin", "counter", "--bogus"],
        vec!["run", "--builtin", "counter", "--file", "corpus/counter.scn"],
        vec!["run", "--builtin", "counter", "--n", "0"],
        vec!["run", "--builtin", "counter", "--dt", "-1"],
        vec!["run", "--builtin", "counter", "--format", "xml"],
        vec!["run", "--builtin", "no_such_scenario"],
        vec!["run", "--file", "corpus/missing.scn"],
    ] {
        let o = nrule(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    let o = nrule_env(&["run", "--builtin", "counter"], &[("NRULE_WORKERS", "many")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("missing/dir/out.json");
    let o = nrule(&["run", "--builtin", "counter", "--out", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    assert_eq!(nrule(&["--help"]).status.code(), Some(0));
    assert_eq!(nrule(&["--version"]).status.code(), Some(0));
}
