use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;
use vulngraph::datasets::{synth_corpus, write_jsonl, PatternSet};
use vulngraph::frontend::export::relation_color;
use vulngraph::frontend::{Relation, OVERFLOW_EXAMPLE};

fn vulngraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulngraph")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn example_file(dir: &Path) -> PathBuf {
    let path = dir.join("example.c");
    std::fs::write(&path, OVERFLOW_EXAMPLE).unwrap();
    path
}

/// One trained checkpoint shared by the tests that need it.
struct Trained {
    dir: TempDir,
    checkpoint: PathBuf,
    metrics: PathBuf,
}

fn trained() -> &'static Trained {
    static TRAINED: OnceLock<Trained> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let dataset = dir.path().join("synth.jsonl");
        std::fs::write(&dataset, write_jsonl(&synth_corpus(400, 0.5, 7, PatternSet::default()))).unwrap();
        let checkpoint = dir.path().join("model.bin");
        let metrics = dir.path().join("metrics.csv");
        let out = vulngraph(&[
            "train",
            "--threads",
            "1",
            "--max-epochs",
            "15",
            "--dataset",
            s(&dataset),
            "--checkpoint",
            s(&checkpoint),
            "--metrics",
            s(&metrics),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Trained { dir, checkpoint, metrics }
    })
}

#[test]
fn graph_dot_uses_all_six_relation_colors() {
    let dir = tempfile::tempdir().unwrap();
    let input = example_file(dir.path());
    let dot = dir.path().join("g.dot");
    let out = vulngraph(&["graph", s(&input), "--dot", s(&dot)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&dot).unwrap();
    for r in Relation::ALL {
        assert!(text.contains(&format!("color={}", relation_color(r))), "{r} missing");
    }
}

#[test]
fn graph_relations_flag_restricts_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = example_file(dir.path());
    let out = vulngraph(&["graph", s(&input), "--relations", "ast,cfg"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let edges = json["edges"].as_object().expect("edges object");
    let mut keys: Vec<&str> = edges.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["AST", "CFG"]);
}

#[test]
fn unparseable_and_empty_files_are_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.c");
    std::fs::write(&bad, "int f( { return; ").unwrap();
    let empty = dir.path().join("empty.c");
    std::fs::write(&empty, "").unwrap();
    for file in [&bad, &empty] {
        let out = vulngraph(&["graph", s(file)]);
        assert_eq!(out.status.code(), Some(1), "{}", file.display());
    }
}

#[test]
fn missing_dataset_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = vulngraph(&[
        "train",
        "--dataset",
        s(&dir.path().join("absent.jsonl")),
        "--checkpoint",
        s(&dir.path().join("m.bin")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d.jsonl");
    std::fs::write(&dataset, write_jsonl(&synth_corpus(20, 0.5, 1, PatternSet::default()))).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vulngraph"))
        .args(["train", "--dataset", s(&dataset), "--checkpoint", s(&dir.path().join("m.bin"))])
        .env("DEVIGN_CONFIG", dir.path().join("absent.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d.jsonl");
    std::fs::write(&dataset, write_jsonl(&synth_corpus(20, 0.5, 1, PatternSet::default()))).unwrap();
    let out = vulngraph(&["train", "--dataset", s(&dataset), "--checkpoint", s(&dir.path().join("m.bin")), "--z", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_from_environment_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d.jsonl");
    std::fs::write(&dataset, write_jsonl(&synth_corpus(40, 0.5, 2, PatternSet::default()))).unwrap();
    let mut cfg = vulngraph::config::RunConfig::desk();
    cfg.max_epochs = 2;
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
    let metrics = dir.path().join("m.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_vulngraph"))
        .args(["train", "--threads", "1", "--dataset", s(&dataset), "--metrics", s(&metrics)])
        .args(["--checkpoint", s(&dir.path().join("m.bin"))])
        .env("DEVIGN_CONFIG", &config)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&metrics).unwrap().lines().count(), 3);
}

#[test]
fn flat_and_conv_checkpoints_differ() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d.jsonl");
    std::fs::write(&dataset, write_jsonl(&synth_corpus(40, 0.5, 3, PatternSet::default()))).unwrap();
    let run = |readout: &str| {
        let ck = dir.path().join(format!("{readout}.bin"));
        let out = vulngraph(&[
            "train",
            "--threads",
            "1",
            "--max-epochs",
            "1",
            "--readout",
            readout,
            "--dataset",
            s(&dataset),
            "--checkpoint",
            s(&ck),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(ck).unwrap()
    };
    assert_ne!(run("flat"), run("conv"));
}

#[test]
fn training_reaches_high_validation_accuracy() {
    let t = trained();
    let csv = std::fs::read_to_string(&t.metrics).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "val_acc").expect("val_acc column");
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    let acc: f64 = last[col].parse().unwrap();
    assert!(acc >= 0.90, "final val_acc {acc}");
}

#[test]
fn predict_flags_the_overflow_example() {
    let t = trained();
    let input = example_file(t.dir.path());
    let out = vulngraph(&["predict", "--checkpoint", s(&t.checkpoint), s(&input)]);
    assert!(out.status.success());
    assert!(stdout(&out).trim_end().ends_with("vulnerable"), "{}", stdout(&out));
}

#[test]
fn predict_is_deterministic_and_rejects_empty_files() {
    let t = trained();
    let input = example_file(t.dir.path());
    let out = vulngraph(&["predict", "--checkpoint", s(&t.checkpoint), s(&input), s(&input)]);
    assert!(out.status.success());
    let probs: Vec<String> = stdout(&out).lines().map(|l| l.split('\t').nth(1).unwrap().to_string()).collect();
    assert_eq!(probs.len(), 2);
    assert_eq!(probs[0], probs[1]);

    let empty = t.dir.path().join("empty.c");
    std::fs::write(&empty, "").unwrap();
    let out = vulngraph(&["predict", "--checkpoint", s(&t.checkpoint), s(&empty)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_reports_metrics_on_an_imbalanced_sample() {
    let t = trained();
    let dataset = t.dir.path().join("eval.jsonl");
    std::fs::write(&dataset, write_jsonl(&synth_corpus(200, 0.5, 21, PatternSet::default()))).unwrap();
    let report = t.dir.path().join("report.json");
    let out = vulngraph(&[
        "eval",
        "--checkpoint",
        s(&t.checkpoint),
        "--dataset",
        s(&dataset),
        "--positive-rate",
        "0.1",
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["n"], 111);
    assert!(json["f1"].as_f64().unwrap() > 0.0);
}

#[test]
fn synth_writes_the_requested_split() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("s.jsonl");
    let out = vulngraph(&["synth", "--n", "50", "--vuln-fraction", "0.2", "--seed", "3", "--out", s(&out_path)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 50);
    assert_eq!(text.lines().filter(|l| l.contains("\"label\":1")).count(), 10);
}
