use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
experiment_id = "cli-small"
model = "weibull{scale=1.0,shape=0.5}"
kernel = "absdiff"
n_values = [20, 30]
t_grid = [0.5, 1.0, 2.0]
v_replications = 100000

[mc]
replications = 5000
seed = 3

[ldp]
t = 1.0
n_values = [20]
pilot_replications = 2000
max_replications = 20000
"#;

fn utail(args: &[&str], dir: &Path, seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_utail"));
    cmd.args(args).current_dir(dir).env_remove("UTAIL_SEED");
    if let Some(s) = seed_env {
        cmd.env("UTAIL_SEED", s);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest_seed(dir: &Path) -> u64 {
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m["seed"].as_u64().unwrap()
}

#[test]
fn catalog_lists_models_and_kernels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = utail(&["catalog"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["models"].as_array().unwrap().len(), 6);
    assert!(v["kernels"].as_array().unwrap().iter().any(|k| k == "product"));
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = utail(&["run", "--config", &cfg, "--out-dir", "res/a", "--threads", "2", "--assert"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["bound.csv", "tail.csv", "ldp_scan.csv", "check.json", "manifest.json"] {
        assert!(tmp.path().join("res/a").join(f).is_file(), "{f}");
    }
}

#[test]
fn single_stage_writes_only_its_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = utail(&["bound", "--config", &cfg, "--out-dir", "b"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("b/bound.csv").is_file());
    assert!(!tmp.path().join("b/tail.csv").exists());
}

#[test]
fn seed_precedence_flag_then_env_then_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    utail(&["check", "--config", &cfg, "--out-dir", "s1"], tmp.path(), None);
    assert_eq!(manifest_seed(&tmp.path().join("s1")), 3);
    utail(&["check", "--config", &cfg, "--out-dir", "s2"], tmp.path(), Some("11"));
    assert_eq!(manifest_seed(&tmp.path().join("s2")), 11);
    utail(&["check", "--config", &cfg, "--out-dir", "s3", "--seed", "12"], tmp.path(), Some("11"));
    assert_eq!(manifest_seed(&tmp.path().join("s3")), 12);
    let bad = utail(&["check", "--config", &cfg, "--out-dir", "s4"], tmp.path(), Some("abc"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn tail_output_independent_of_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    utail(&["tail", "--config", &cfg, "--out-dir", "t1", "--threads", "1"], tmp.path(), None);
    utail(&["tail", "--config", &cfg, "--out-dir", "t3", "--threads", "3"], tmp.path(), None);
    let a = std::fs::read(tmp.path().join("t1/tail.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("t3/tail.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_token = write_config(tmp.path(), "k.toml", &SMALL.replace("\"absdiff\"", "\"prod\""));
    let out = utail(&["run", "--config", &bad_token], tmp.path(), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("product"));

    let syntax = write_config(tmp.path(), "s.toml", "experiment_id = \n");
    assert_eq!(utail(&["run", "--config", &syntax], tmp.path(), None).status.code(), Some(2));
    assert_eq!(utail(&["run", "--config", "missing.toml"], tmp.path(), None).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    assert_eq!(utail(&["run", "--config", &cfg, "--threads", "0"], tmp.path(), None).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_3_with_partial_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("v_replications = 100000", "v_mode = \"subweibull_cap\"")
        .replace("weibull{scale=1.0,shape=0.5}", "pareto{scale=1.0,index=3.0}");
    let cfg = write_config(tmp.path(), "p.toml", &text);
    let out = utail(&["run", "--config", &cfg, "--out-dir", "p"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("p/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["failed_stage"], "setup");
}

#[test]
fn assert_flags_property_violation_with_exit_4() {
    // A lower-bound constant far above any valid value pushes the lower bound over the CI.
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("v_replications = 100000", "v_replications = 100000\nlower_bound_c = 1000.0");
    let cfg = write_config(tmp.path(), "v.toml", &text);
    let plain = utail(&["tail", "--config", &cfg, "--out-dir", "v1"], tmp.path(), None);
    assert_eq!(plain.status.code(), Some(0));
    let strict = utail(&["tail", "--config", &cfg, "--out-dir", "v2", "--assert"], tmp.path(), None);
    assert_eq!(strict.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("lower bound"));
}
