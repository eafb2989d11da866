use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use openloop::bridge::{BridgeOptions, Endpoint};
use openloop::env::ActuationMode;
use openloop::search_space::{Preset, SearchSpace};
use openloop_runner::evaluate::load_record;
use openloop_runner::ExperimentConfig;

const BIN: &str = env!("CARGO_BIN_EXE_openloop");
const STUB: &str = env!("CARGO_BIN_EXE_openloop-stub-bridge");

fn openloop(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("runner binary starts")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// A two-generation swimmer run.
fn small_swimmer(dir: &Path) -> PathBuf {
    let mut config = ExperimentConfig::new("purcell_swimmer");
    config.optimizer.population_size = 6;
    config.optimizer.budget_steps = 2 * 6 * 400;
    config.output_dir = dir.join("runs");
    let path = dir.join("swimmer.toml");
    fs::write(&path, config.to_toml()).unwrap();
    path
}

#[test]
fn missing_config_is_a_configuration_error() {
    let out = openloop(&["optimize", "/nonexistent/missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn unknown_subcommand_and_flags_exit_one() {
    assert_eq!(openloop(&["launch"]).status.code(), Some(1));
    assert_eq!(openloop(&["optimize", "--bogus"]).status.code(), Some(1));
    assert_eq!(openloop(&["--jobs", "0", "optimize", "--print-config"]).status.code(), Some(1));
    assert_eq!(openloop(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_contents_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "env = \"purcell_swimmer\"\nseeds = []\n").unwrap();
    assert_eq!(openloop(&["optimize", path.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&path, "env = \"no_such_env\"\n").unwrap();
    assert_eq!(openloop(&["optimize", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn printed_config_parses_back() {
    for env in ["purcell_swimmer", "crawler", "external:Quadruped-v0"] {
        let out = openloop(&["optimize", "--print-config", "--env", env]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let text = stdout(&out);
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(parsed, ExperimentConfig::documented_defaults(env).unwrap());
        assert!(text.contains("population_size = 30"));
        assert!(text.contains("dt_phase = 0.001"));
    }
}

#[test]
fn bridge_check_against_stub_process() {
    let out = openloop(&["bridge-check", STUB, "--obs-dim", "6", "--act-dim", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["ok"], true);
    assert_eq!(report["obs_dim"], 6);
    assert_eq!(report["act_dim"], 3);
}

#[test]
fn bridge_check_reports_unreachable_server() {
    let out = openloop(&["bridge-check", "tcp://127.0.0.1:1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_reproduces_stored_fitness() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_swimmer(dir.path());
    let out = openloop(&["--seed", "3", "optimize", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let record_path = dir.path().join("runs/records/purcell_swimmer_full_seed3.json");
    let record = load_record(&record_path).unwrap();
    assert!(record.complete);
    assert_eq!(record.generations.len(), 2);
    let best = record.best.as_ref().unwrap();

    let out = openloop(&["evaluate", record_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let episodes: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let replayed = episodes[0]["return"].as_f64().unwrap();
    assert_eq!(replayed.to_bits(), best.fitness.to_bits(), "{replayed} vs {}", best.fitness);

    let csv = fs::read_to_string(dir.path().join("runs/purcell_swimmer_full.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("env,method,variant,seed,generation,return"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_swimmer(dir.path());
    let mut records = Vec::new();
    for jobs in ["1", "3"] {
        let out_dir = dir.path().join(format!("jobs{jobs}"));
        let out = openloop(&["--jobs", jobs, "--out", out_dir.to_str().unwrap(), "optimize", config.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        records.push((
            load_record(&out_dir.join("records/purcell_swimmer_full_seed0.json")).unwrap(),
            fs::read(out_dir.join("purcell_swimmer_full.csv")).unwrap(),
        ));
    }
    let (a, b) = (&records[0].0, &records[1].0);
    assert_eq!(a.generations, b.generations);
    assert_eq!(a.best, b.best);
    assert_eq!(a.env_steps, b.env_steps);
    assert_eq!(records[0].1, records[1].1);
}

#[test]
fn bridge_dying_mid_run_leaves_incomplete_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new("external:Stub");
    config.optimizer.population_size = 4;
    config.optimizer.budget_steps = 10 * 4 * 20;
    config.output_dir = dir.path().join("runs");
    config.search_space = Some(SearchSpace::preset_with_joints(Preset::Hopper, 1));
    // The shell forwards 50 requests unbuffered, then closes the server's
    // input, so the server exits partway through the first generation.
    let pipeline = format!(
        "i=0; while [ $i -lt 50 ] && IFS= read -r line; do printf '%s\\n' \"$line\"; i=$((i+1)); done \\
         | {STUB} --obs-dim 2 --act-dim 1 --episode-steps 20"
    );
    config.env_options.bridge = Some(BridgeOptions {
        endpoint: Endpoint::Command(vec!["sh".into(), "-c".into(), pipeline]),
        episode_steps: 20,
        actuation_mode: ActuationMode::Position,
        joints: Default::default(),
        expected_joints: Some(1),
        timeout_secs: 10.0,
    });
    let path = dir.path().join("stub.toml");
    fs::write(&path, config.to_toml()).unwrap();

    let out = openloop(&["optimize", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let record = load_record(&dir.path().join("runs/records/external_Stub_full_seed0.json")).unwrap();
    assert!(!record.complete);
    assert!(record.error.is_some());
    assert!(record.generations.is_empty());
}

#[test]
fn bridge_run_completes_against_live_stub() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new("external:Stub");
    config.optimizer.population_size = 4;
    config.optimizer.budget_steps = 3 * 4 * 20;
    config.output_dir = dir.path().join("runs");
    config.search_space = Some(SearchSpace::preset_with_joints(Preset::Hopper, 1));
    config.env_options.bridge = Some(BridgeOptions {
        endpoint: Endpoint::Command(vec![STUB.into(), "--obs-dim".into(), "2".into(), "--act-dim".into(), "1".into()]),
        episode_steps: 20,
        actuation_mode: ActuationMode::Position,
        joints: Default::default(),
        expected_joints: Some(1),
        timeout_secs: 10.0,
    });
    let path = dir.path().join("stub.toml");
    fs::write(&path, config.to_toml()).unwrap();
    let out = openloop(&["optimize", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let record = load_record(&dir.path().join("runs/records/external_Stub_full_seed0.json")).unwrap();
    assert!(record.complete);
    assert_eq!(record.generations.len(), 3);
}

#[test]
fn metrics_summary_matches_frozen_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let csv_dir = fixtures().join("metrics");
    let out = openloop(&["--out", dir.path().to_str().unwrap(), "metrics", csv_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let expected = fs::read_to_string(fixtures().join("metrics_summary.json")).unwrap();
    assert_eq!(stdout(&out), expected);
    assert_eq!(fs::read_to_string(dir.path().join("summary.json")).unwrap(), expected);
    let profiles = fs::read_to_string(dir.path().join("profiles.csv")).unwrap();
    assert_eq!(profiles.lines().count(), 42);
    assert!(dir.path().join("aggregates.csv").exists());
}

#[test]
fn metrics_rejects_wrong_header() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "env,method,score\nx,y,1\n").unwrap();
    assert_eq!(openloop(&["metrics", dir.path().to_str().unwrap()]).status.code(), Some(1));
}
