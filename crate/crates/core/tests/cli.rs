use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ministl::harness::report::read_table;
use ministl::harness::ResultsTable;

const TINY: &str = "\
model: {name: metavp-gated_attention, hid_S: 8, hid_T: 16, N_S: 2, N_T: 2}
data: {size: 32, train_count: 24, test_count: 6}
train: {epochs: 1, batch_size: 4}
bench:
  perturbations: [missing]
  strips: 1
  fps: {warmup: 1, timed: 2, batch: 2}
";

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ministl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ministl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("MINISTL_DEVICE")
        .env_remove("MINISTL_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.yaml");
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

#[test]
fn gen_data_dry_run_prints_spec_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("mmnist.yaml");
    let o = ministl(&["gen-data", "--config", cfg.to_str().unwrap(), "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan[1]["dataset"]["count"], 10000);
    assert_eq!(plan[1]["dataset"]["split"], "test");
    assert_eq!(plan[1]["dataset"]["seed"]["master_seed"], 42);
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn every_subcommand_supports_dry_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("table3_mini.yaml");
    for cmd in ["gen-data", "train", "eval", "bench", "report"] {
        let o = ministl(&[cmd, "--config", cfg.to_str().unwrap(), "--dry-run"], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap();
    }
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ministl(&["train", "--config", "x.yaml", "--bogus"], tmp.path());
    assert_eq!(o.status.code(), Some(1));

    let cfg = write_config(tmp.path(), "model: {name: metavp-gated_attention}\ntrain: {epochz: 3}\n");
    let o = ministl(&["train", "--config", cfg.to_str().unwrap(), "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochz"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "model: {name: no-such-model}\n");
    let o = ministl(&["train", "--config", cfg.to_str().unwrap(), "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no-such-model"));

    let cfg = configs().join("smoke.yaml");
    let o = ministl(&["train", "--config", cfg.to_str().unwrap(), "--device", "cuda:0", "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("device"));

    let cfg = write_config(tmp.path(), "model: {name: convlstm}\ndata: {size: 16}\n");
    let o = ministl(&["gen-data", "--config", cfg.to_str().unwrap(), "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not fit"));

    let o = ministl(&["eval", "--config", "/nonexistent/cfg.yaml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn device_env_var_is_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.yaml");
    let o = Command::new(env!("CARGO_BIN_EXE_ministl"))
        .args(["train", "--config", cfg.to_str().unwrap(), "--dry-run"])
        .env("MINISTL_DEVICE", "gpu")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gpu"));
}

#[test]
fn overrides_change_the_resolved_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.yaml");
    let o = ministl(&["train", "--config", cfg.to_str().unwrap(), "--dry-run", "--seed", "7", "--epochs", "3"], tmp.path());
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["config"]["seed"], 7);
    assert_eq!(plan["config"]["train"]["epochs"], 3);
    assert!(plan["run_dir"].as_str().unwrap().starts_with(tmp.path().to_str().unwrap()));
}

#[test]
fn missing_checkpoint_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let o = ministl(&["eval", "--config", cfg.to_str().unwrap(), "--checkpoint", "/nonexistent.safetensors"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_zero_epochs_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), TINY);
    let o = ministl(&["train", "--config", cfg.to_str().unwrap(), "--epochs", "0"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = run_dir(&out);
    assert!(dir.join("checkpoints/best.safetensors").is_file());
    assert!(dir.join("config.yaml").is_file());
    let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(record["history"].as_array().unwrap().len(), 0);

    let o = ministl(&["eval", "--config", cfg.to_str().unwrap(), "--epochs", "0"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["mse_paper"].as_f64().unwrap() > 0.0);
    assert!(report["fps"].as_f64().unwrap() > 0.0);
}

#[test]
fn gen_data_writes_verified_containers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let o = ministl(&["gen-data", "--config", cfg.to_str().unwrap(), "--split", "test"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = run_dir(tmp.path()).join("data");
    let split = ministl::datagen::container::load(&dir.join("test.safetensors")).unwrap();
    assert_eq!(split.len(), 6);
    assert!(!dir.join("train.safetensors").exists());
}

#[test]
fn bench_then_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), TINY);
    let o = ministl(&["bench", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = run_dir(&out);
    for f in ["report.csv", "report.json", "report.md", "strips/metavp-gated_attention_000.png"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let table = read_table(&dir.join("report.json")).unwrap();
    assert_eq!(table.rows.len(), 2);
    std::fs::remove_file(dir.join("report.csv")).unwrap();
    let o = ministl(&["report", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = ResultsTable::from_csv(&std::fs::read_to_string(dir.join("report.csv")).unwrap()).unwrap();
    assert_eq!(csv, table);
}

#[test]
fn bench_with_failing_entry_marks_row_and_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let text = format!("{TINY}  suite:\n    - {{name: convlstm, rnn_layers: 1, rnn_hidden: 2, checkpoint: /nonexistent.safetensors}}\n");
    let text = text.replace("  perturbations: [missing]\n", "");
    let cfg = write_config(tmp.path(), &text);
    let o = ministl(&["bench", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let table = read_table(&run_dir(&out).join("report.json")).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(!table.rows[0].is_ok());
}

#[test]
fn bench_with_empty_suite_emits_empty_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), &format!("{TINY}  suite: []\n"));
    let o = ministl(&["bench", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(read_table(&run_dir(&out).join("report.json")).unwrap().rows.is_empty());
}
