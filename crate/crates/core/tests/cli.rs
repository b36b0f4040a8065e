use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use laneplan::policy::{ScorerModel, TrainingMode};
use laneplan::scenario::{check_route_consistency, load_scenarios};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_laneplan"));
    // keep the caller's environment from leaking into flag resolution
    for (k, _) in std::env::vars_os() {
        if k.to_string_lossy().starts_with("LANEPLAN_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small shared suite and models, built once per test binary.
struct Shared {
    _dir: TempDir,
    scenarios: PathBuf,
    unconditioned: PathBuf,
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let scenarios = dir.path().join("s.json");
        let unconditioned = dir.path().join("m.json");
        ok(&["generate", "--seed", "3", "--count", "6", "--out", p(&scenarios)]);
        ok(&["train", "--scenarios", p(&scenarios), "--mode", "unconditioned", "--epochs", "2", "--seed", "1", "--out", p(&unconditioned)]);
        Shared { _dir: dir, scenarios, unconditioned }
    })
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&["generate", "--seed", "7", "--count", "4", "--out", p(&a)]);
    ok(&["generate", "--seed", "7", "--count", "4", "--out", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let records = load_scenarios(&a).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        check_route_consistency(r).unwrap();
    }
}

#[test]
fn untrained_model_is_the_seeded_init() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    ok(&["train", "--scenarios", p(&shared().scenarios), "--mode", "node_features", "--epochs", "0", "--seed", "5", "--out", p(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text, ScorerModel::init(TrainingMode::NodeFeatures, 5).to_json());
}

#[test]
fn soft_mask_training_stores_beta_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        ok(&["train", "--scenarios", p(&shared().scenarios), "--mode", "soft_mask", "--epochs", "2", "--seed", "2", "--out", p(out)]);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let model = ScorerModel::from_json(&text).unwrap();
    assert!(model.beta.is_some());
    assert!(text.contains("\"beta\""));
}

fn csv_ids(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect()
}

#[test]
fn repeats_add_mean_and_std_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.csv");
    let s = shared();
    ok(&["eval", "--scenarios", p(&s.scenarios), "--model", p(&s.unconditioned), "--planner", "pgp", "--samples", "40", "--repeat", "2", "--out", p(&out)]);
    let ids = csv_ids(&out);
    assert!(ids.contains(&"mean".to_string()) && ids.contains(&"std".to_string()), "{ids:?}");
    assert!(ids.iter().any(|id| id.ends_with("@r1")));
}

#[test]
fn idm_needs_no_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.csv");
    ok(&["eval", "--scenarios", p(&shared().scenarios), "--planner", "idm", "--loop", "closed", "--out", p(&out)]);
    assert_eq!(csv_ids(&out).len(), 7, "six scenarios plus the aggregate");
}

#[test]
fn usage_errors_exit_two() {
    let out = run(&["eval", "--scenarios", "x.json", "--planner", "astar", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["eval", "--scenarios", p(&shared().scenarios), "--planner", "gc_pgp", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(2), "learned planner without a model");
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_orders_planners_by_score() {
    let dir = tempfile::tempdir().unwrap();
    let s = shared();
    let idm = dir.path().join("idm.csv");
    let expert = dir.path().join("expert.csv");
    ok(&["eval", "--scenarios", p(&s.scenarios), "--planner", "idm", "--loop", "closed", "--out", p(&idm)]);
    ok(&["eval", "--scenarios", p(&s.scenarios), "--planner", "expert", "--loop", "closed", "--out", p(&expert)]);

    let single = ok(&["report", p(&idm)]);
    assert!(single.contains("idm"));

    let plots = dir.path().join("plots");
    let table = ok(&["report", p(&idm), p(&expert), "--plot-dir", p(&plots)]);
    let header = table.lines().next().unwrap();
    let (e, i) = (header.find("expert").unwrap(), header.find("idm").unwrap());
    assert!(e < i, "expert replay scores 1 and comes first:\n{table}");
    assert!(plots.join("score.csv").exists());
}

#[test]
fn report_names_a_missing_file() {
    let out = run(&["report", "/nonexistent/metrics.csv"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/metrics.csv"));
}

#[test]
fn config_file_and_environment_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let from_file = dir.path().join("file.json");
    std::fs::write(&cfg, format!("[generate]\nseed = 9\ncount = 2\nout = {:?}\n", p(&from_file))).unwrap();
    ok(&["--config", p(&cfg), "generate"]);
    assert_eq!(load_scenarios(&from_file).unwrap().len(), 2);

    // a flag beats the file
    let flagged = dir.path().join("flag.json");
    ok(&["--config", p(&cfg), "generate", "--count", "3", "--out", p(&flagged)]);
    assert_eq!(load_scenarios(&flagged).unwrap().len(), 3);

    // so does the environment
    let env_out = dir.path().join("env.json");
    let out = bin().args(["--config", p(&cfg), "generate"]).env("LANEPLAN_COUNT", "1").env("LANEPLAN_OUT", &env_out).output().unwrap();
    assert!(out.status.success());
    let records = load_scenarios(&env_out).unwrap();
    assert_eq!(records.len(), 1);
    assert!(records[0].scenario_id.starts_with("isec_9_"), "seed still comes from the file");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[generate]\nsede = 1\n").unwrap();
    let out = run(&["--config", p(&bad), "generate", "--out", p(&flagged)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let s = shared();
    let mut bytes = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("e{jobs}.csv"));
        ok(&["eval", "--scenarios", p(&s.scenarios), "--model", p(&s.unconditioned), "--planner", "gc_pgp", "--samples", "40", "--jobs", jobs, "--out", p(&out)]);
        bytes.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}
