use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
n_clients = 8
clients_per_round = 4
rounds = 2
lr = 0.01
encoder_hidden = [8]
embed_dim = 6
topk = 2

[dataset]
num_classes = 4
audio_dim = 4
visual_dim = 3
samples_per_class = 20
audio_ambiguous_pairs = [[0, 1]]
";

fn mmirror(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmirror"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is JSON")
}

#[test]
fn run_writes_a_cell_and_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), format!("seed = 3\nstrategy = \"unifl\"\n{SMALL}")).unwrap();
    let o = mmirror(
        &["run", "--config", "c.toml", "--strategy", "harmony", "--missing-rate", "0.5", "--out", "out"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["strategy"], "harmony");
    assert_eq!(v["seed"], 3);
    assert!(v["audio_top1"].as_f64().unwrap() <= 1.0);
    assert!(dir.path().join("out/harmony/0.50/3/rounds.csv").is_file());
    assert!(dir.path().join("out/summary.json").is_file());
}

#[test]
fn invalid_config_reports_fields_as_json() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "n_clients = 4\nclients_per_round = 9\nlr = -1\n").unwrap();
    let o = mmirror(&["run", "--config", "bad.toml"], dir.path());
    assert!(!o.status.success());
    let v = stderr_json(&o);
    assert_eq!(v["error"], "config");
    let paths: Vec<&str> = v["fields"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert!(paths.contains(&"clients_per_round") && paths.contains(&"lr"), "{paths:?}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmirror(&["run", "--config", "nope.toml"], dir.path());
    assert!(!o.status.success());
    assert_eq!(stderr_json(&o)["error"], "io");
}

#[test]
fn usage_errors_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmirror(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn sweep_and_f1_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = mmirror(
        &[
            "sweep", "--config", "c.toml", "--strategies", "modality_mirror,multifl", "--missing-rates", "0.25,0.5",
            "--seeds", "0,1", "--out", "out", "--workers", "2",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 4);
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    let o = mmirror(
        &[
            "report-f1diff", "--a", "out/modality_mirror/0.25/0", "--b", "out/multifl/0.25/0", "--top-n", "2", "--out",
            "diff.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("diff.csv")).unwrap();
    assert!(csv.starts_with("rank,class,class_name,audio_ambiguous,f1_a,f1_b,delta"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn gen_data_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = mmirror(&["gen-data", "--config", "c.toml", "--out", "d.jsonl"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["train"], 64);
    let first = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    assert!(first.lines().next().unwrap().contains("mmirror-dataset"));

    let o = mmirror(&["gen-data", "--config", "c.toml", "--out", "d.csv", "--format", "csv"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(csv.starts_with("split,label,a0"));
    assert_eq!(csv.lines().count(), 81);
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmirror(&["gradcheck", "--seeds", "2"], dir.path());
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["passed"], true);
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-4);
}
