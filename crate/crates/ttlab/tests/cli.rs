use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ttlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("TTLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

const SMALL: &str = r#"
seed = 9

[system]
preset = "drifted-mixing"

[[tasks]]
task = "exact-corr"
times = { from = 0, to = 30 }

[[tasks]]
task = "mc"
times = [0, 1, 4]
samples = 4000

[[tasks]]
task = "charfn"
times = [5, 10]
xi = [[0.1], [0.5]]
"#;

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn empty_task_list_is_a_schema_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "seed = 1\n[system]\npreset = \"zero-drift-mixing\"\n");
    let out = ttlab(tmp.path(), &["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task list is empty"));
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[[tasks]]\ntask = \"tau-dist\"\nn = 3\nextra = 1\n");
    let out = ttlab(tmp.path(), &["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));
}

#[test]
fn exhausted_budget_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "budget = 10\n[system]\npreset = \"zero-drift-mixing\"\n[[tasks]]\ntask = \"tau-dist\"\nn = 50\n");
    let out = ttlab(tmp.path(), &["run", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    assert!(ttlab(tmp.path(), &["run", "--config", &cfg, "--out", "a"]).status.success());
    assert!(ttlab(tmp.path(), &["run", "--config", &cfg, "--out", "b", "--workers", "1"]).status.success());
    let first = csvs(&tmp.path().join("a"));
    assert_eq!(first.len(), 3);
    assert_eq!(first, csvs(&tmp.path().join("b")));

    let rerun = ttlab(tmp.path(), &["rerun", "--manifest", "a/manifest.json", "--out", "c"]);
    assert!(rerun.status.success(), "{}", String::from_utf8_lossy(&rerun.stderr));
    assert_eq!(first, csvs(&tmp.path().join("c")));

    let header = String::from_utf8(first[0].1.clone()).unwrap();
    assert!(header.starts_with("N,re,im,abs\n") && !header.contains('\r'));
}

#[test]
fn seed_changes_monte_carlo_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    assert!(ttlab(tmp.path(), &["run", "--config", &cfg, "--out", "a"]).status.success());
    assert!(ttlab(tmp.path(), &["run", "--config", &cfg, "--out", "b", "--seed", "10"]).status.success());
    let (a, b) = (csvs(&tmp.path().join("a")), csvs(&tmp.path().join("b")));
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        assert_eq!(x == y, !name.contains("-mc-"), "{name}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 10);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn workers_fall_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_ttlab"))
        .args(["mc", "--config", &cfg, "--out", "e"])
        .current_dir(tmp.path())
        .env("TTLAB_WORKERS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("e/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["workers"], 1);
    assert_eq!(csvs(&tmp.path().join("e")).len(), 1);
}

#[test]
fn subcommand_without_matching_tasks_is_a_schema_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    assert_eq!(ttlab(tmp.path(), &["clt", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn gk_constant_scenario_writes_its_comparison() {
    let tmp = TempDir::new().unwrap();
    let out = ttlab(tmp.path(), &["scenario", "gk-constant", "--out", "g"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(tmp.path().join("g/00-scenario-comparison.csv")).unwrap();
    assert!(table.starts_with("N,rho,L_N_rho,sqrtN_rho,constant\n"));
    assert_eq!(table.lines().count(), 1 + 81);
    let reports = fs::read_to_string(tmp.path().join("g/00-scenario-reports.csv")).unwrap();
    assert!(reports.contains("gk-constant,scaled-by-L_N"));
}

#[test]
fn partitions_runs_without_a_config() {
    let tmp = TempDir::new().unwrap();
    let out = ttlab(tmp.path(), &["partitions", "--s", "6", "--out", "p"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("p/00-partitions.json")).unwrap()).unwrap();
    assert_eq!(json["summary"]["count"], 41);
    assert!(json["summary"]["pairing"].as_array().unwrap().iter().all(|c| c["holds"] == true));
}
