use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gracr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gracr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = path(dir, "run.json");
    fs::write(&p, body).unwrap();
    p
}

fn synth(dir: &Path, name: &str, seed: u64, docs: usize) -> String {
    let out = path(dir, name);
    let o = gracr(&["synth", "--seed", &seed.to_string(), "--docs", &docs.to_string(), "--output", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&gracr(&["--help"])), 0);
    assert_eq!(code(&gracr(&[])), 1);
    assert_eq!(code(&gracr(&["frobnicate"])), 1);
    assert_eq!(code(&gracr(&["explain", "--head", "zero", "--tail", "1"])), 1);
}

#[test]
fn synth_requires_a_seed() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "c.json");
    assert_eq!(code(&gracr(&["synth", "--output", &out])), 1);
    assert!(!Path::new(&out).exists());

    let cfg = write_config(dir.path(), r#"{"seed": 3, "generator": {"inter_fraction": 0.8}}"#);
    assert_eq!(code(&gracr(&["synth", "--config", &cfg, "--docs", "4", "--output", &out])), 0);
    assert!(fs::read_to_string(&out).unwrap().contains("synthetic-3-0"));
}

#[test]
fn unknown_config_field_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"seed": 1, "modle": {}}"#);
    let out = path(dir.path(), "c.json");
    assert_eq!(code(&gracr(&["synth", "--config", &cfg, "--output", &out])), 1);
}

#[test]
fn unreadable_data_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = path(dir.path(), "bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&gracr(&["stats", "--corpus", &bad])), 2);
    assert_eq!(code(&gracr(&["stats", "--corpus", &path(dir.path(), "missing.json")])), 2);
}

#[test]
fn explain_demo_document() {
    let o = gracr(&["explain", "--head", "0", "--tail", "2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("intra-sentence paths (PI): 0"), "{text}");
    assert!(text.contains("logical paths (PL): 1"), "{text}");
    assert!(text.contains("via E1 \"Acme\""), "{text}");
    assert_eq!(code(&gracr(&["explain", "--head", "1", "--tail", "1"])), 1);
}

#[test]
fn stats_and_graphs() {
    let dir = TempDir::new().unwrap();
    let corpus = synth(dir.path(), "c.json", 5, 6);
    let o = gracr(&["stats", "--corpus", &corpus, "--json"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["documents"], 6);

    let graphs = path(dir.path(), "g.json");
    assert_eq!(code(&gracr(&["build-graphs", "--corpus", &corpus, "--output", &graphs])), 0);
    let g: serde_json::Value = serde_json::from_str(&fs::read_to_string(&graphs).unwrap()).unwrap();
    assert_eq!(g.as_array().unwrap().len(), 6);
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let train = synth(dir.path(), "train.json", 11, 6);
    let dev = synth(dir.path(), "dev.json", 12, 3);
    let run = path(dir.path(), "run");
    let o = gracr(&[
        "--jobs", "1", "train", "--seed", "4", "--epochs", "2", "--train", &train, "--dev", &dev, "--out", &run,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.json", "train_log.jsonl", "vocab.tsv", "config.json", "summary.json"] {
        assert!(dir.path().join("run").join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("run/train_log.jsonl")).unwrap().lines().count(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);

    let ckpt = path(&dir.path().join("run"), "checkpoint.json");
    let eval = path(dir.path(), "eval");
    let o = gracr(&["evaluate", "--checkpoint", &ckpt, "--corpus", &dev, "--train", &train, "--out", &eval]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("eval/metrics.json")).unwrap()).unwrap();
    assert!(metrics["metrics"]["ign_f1"].is_number());
    assert_eq!(metrics["metrics"]["threshold"], 0.5);

    let preds = path(dir.path(), "p.jsonl");
    let o = gracr(&["predict", "--checkpoint", &ckpt, "--corpus", &dev, "--threshold", "0.0", "--output", &preds]);
    assert_eq!(code(&o), 0);
    // Threshold 0 keeps every scored triple.
    let lines = fs::read_to_string(&preds).unwrap().lines().count();
    assert!(lines > 0);

    // A corpus with a different relation schema is a data error.
    let other = path(dir.path(), "other.json");
    let o = gracr(&["synth", "--seed", "1", "--docs", "2", "--relations", "2", "--output", &other]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&gracr(&["predict", "--checkpoint", &ckpt, "--corpus", &other, "--output", &preds])), 2);
}

#[test]
fn train_flag_overrides_are_checked() {
    let dir = TempDir::new().unwrap();
    let train = synth(dir.path(), "train.json", 1, 2);
    let run = path(dir.path(), "run");
    let args = |set: &'static str| {
        vec![
            "train".to_string(), "--seed".into(), "1".into(), "--epochs".into(), "1".into(), "--train".into(),
            train.clone(), "--dev".into(), train.clone(), "--out".into(), run.clone(), "--set".into(), set.into(),
        ]
    };
    let o = Command::new(env!("CARGO_BIN_EXE_gracr")).args(args("use_magic=false")).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("run").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_gracr")).args(args("use_reasoning=false")).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = fs::read_to_string(dir.path().join("run/config.json")).unwrap();
    assert!(cfg.contains("\"use_reasoning\": false"));
}

#[test]
fn gradcheck_default_config_passes() {
    let o = gracr(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("max relative error"));
}

#[test]
fn ingest_docred_format() {
    let dir = TempDir::new().unwrap();
    let schema = path(dir.path(), "rel_info.json");
    fs::write(&schema, r#"{"P17": "country", "P131": "located in"}"#).unwrap();
    let data = path(dir.path(), "docred.json");
    fs::write(
        &data,
        r#"[{"title": "T", "sents": [["Alice", "lives", "in", "Paris", "."]],
             "vertexSet": [[{"name": "Alice", "sent_id": 0, "pos": [0, 1], "type": "PER"}],
                           [{"name": "Paris", "sent_id": 0, "pos": [3, 4], "type": "LOC"}]],
             "labels": [{"h": 0, "t": 1, "r": "P131", "evidence": [0]}]}]"#,
    )
    .unwrap();
    let out = path(dir.path(), "canon.json");
    let o = gracr(&["ingest", "--input", &data, "--schema", &schema, "--output", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = gracr(&["stats", "--corpus", &out, "--json"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["documents"], 1);
    assert_eq!(report["facts"], 1);
}
