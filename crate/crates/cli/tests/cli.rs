use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zoomin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zoomin")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = zoomin(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn show_config_matches_committed_file() {
    let committed = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")).unwrap();
    assert_eq!(ok(&["show-config"]), committed);
}

#[test]
fn flags_override_config_keys() {
    let text = ok(&["--seed", "7", "--out", "elsewhere", "--strategies", "fine-all", "--budgets", "30,60", "show-config"]);
    assert!(text.contains("seed = 7\n"));
    assert!(text.contains("out = \"elsewhere\"\n"));
    assert!(text.contains("strategies = [\"fine-all\"]"));
    assert!(text.contains("budgets = [30.0, 60.0]"));
}

#[test]
fn zero_scenes_give_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-scenes", "--out", &out_arg(dir.path()), "--train", "0", "--test", "0"]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("scenes/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["train"], serde_json::json!([]));
    assert_eq!(m["test"], serde_json::json!([]));
}

#[test]
fn same_seed_writes_identical_scene_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["gen-scenes", "--seed", "4", "--out", &out_arg(d.path()), "--train", "2", "--test", "3"]);
    }
    for f in ["manifest.json", "train/scene_00001.jsonl", "test/scene_00002.jsonl"] {
        let x = fs::read(a.path().join("scenes").join(f)).unwrap();
        assert_eq!(x, fs::read(b.path().join("scenes").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn fine_all_is_the_full_resolution_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    ok(&["gen-scenes", "--out", &out, "--train", "0", "--test", "4"]);
    let csv = ok(&["evaluate", "--out", &out, "--strategies", "fine-all"]);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let f: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(&f[..5], &["fine-all", "100", "100.0000", "100.0000", "100.0000"]);
    assert!(dir.path().join("reports/report.json").exists());
}

#[test]
fn coarse_all_processes_a_quarter_of_the_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    ok(&["gen-scenes", "--out", &out, "--train", "0", "--test", "4"]);
    let csv = ok(&["evaluate", "--out", &out, "--strategies", "fine-all,coarse-all"]);
    let row = csv.lines().find(|l| l.starts_with("coarse-all,")).unwrap();
    assert_eq!(row.split(',').nth(3), Some("25.0000"));
}

#[test]
fn missing_weights_name_the_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    ok(&["gen-scenes", "--out", &out, "--train", "0", "--test", "1"]);
    let o = zoomin(&["evaluate", "--out", &out, "--strategies", "qnet+er"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("qnet+er") && err.contains("qnet-er.bin"), "{err}");
}

#[test]
fn missing_scenes_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zoomin(&["train-rnet", "--out", &out_arg(dir.path())]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[rl]\ngamma = 2.0\n").unwrap();
    assert_eq!(zoomin(&["--config", path.to_str().unwrap(), "show-config"]).status.code(), Some(2));
    assert_eq!(zoomin(&["--strategies", "nope", "show-config"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    ok(&["gen-scenes", "--out", &out, "--train", "3", "--test", "0"]);
    ok(&["train-rnet", "--out", &out]);
    let cfg = dir.path().join("hot.toml");
    fs::write(&cfg, "[rl]\nlearning_rate = 1e30\nepochs = 2\n").unwrap();
    let o = zoomin(&["--config", cfg.to_str().unwrap(), "train-qnet", "--out", &out, "--strategies", "qnet+rnet"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pipeline_writes_models_logs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    ok(&["gen-scenes", "--out", &out, "--train", "4", "--test", "3"]);
    ok(&["train-rnet", "--out", &out]);
    let log = ok(&["train-qnet", "--out", &out, "--strategies", "qnet+rnet"]);
    assert!(log.contains("qnet-rnet:") && log.contains("epsilon [1.00 0.90"), "{log}");
    let csv = ok(&["evaluate", "--out", &out, "--strategies", "qnet+rnet", "--budgets", "50"]);
    assert!(csv.lines().nth(1).unwrap().starts_with("qnet+rnet,50,"));
    for f in ["models/rnet.bin", "models/qnet-rnet.bin", "models/qnet-rnet.txt", "logs/rnet_mse.csv", "logs/qnet-rnet_loss.csv", "logs/qnet-rnet_returns.csv", "reports/episodes.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn toy_mode_reports_first_action_accuracy() {
    let text = ok(&["train-qnet", "--toy", "--runs", "2", "--episodes", "20"]);
    assert!(text.contains("optimal first action 1: "), "{text}");
}

#[test]
fn hundred_scenes_generate_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let started = std::time::Instant::now();
    ok(&["gen-scenes", "--out", &out_arg(dir.path()), "--train", "0", "--test", "100"]);
    assert!(started.elapsed().as_secs_f64() < 5.0);
    assert!(dir.path().join("scenes/test/scene_00099.jsonl").exists());
}

#[test]
fn regressor_rerun_writes_identical_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    ok(&["gen-scenes", "--out", &out, "--train", "5", "--test", "0"]);
    ok(&["train-rnet", "--out", &out]);
    let first = fs::read(dir.path().join("models/rnet.bin")).unwrap();
    ok(&["train-rnet", "--out", &out]);
    assert_eq!(first, fs::read(dir.path().join("models/rnet.bin")).unwrap());
}

#[test]
fn empty_training_set_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    ok(&["gen-scenes", "--out", &out, "--train", "0", "--test", "0"]);
    let o = zoomin(&["train-rnet", "--out", &out]);
    assert!(!o.status.success());
}
