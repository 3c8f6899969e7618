//! End-to-end checks of the `opsum` binary: exit codes, flag overrides,
//! artifact layout, and idempotent re-runs, all at miniature scale.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn opsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opsum"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A configuration every stage finishes in about a second.
fn tiny_config(dir: &Path) -> Value {
    json!({
        "out_dir": dir.join("out"),
        "seed": 3,
        "corpus": {
            "n_entities": 4,
            "reviews_per_entity": 8,
            "eval_entities": 1,
            "references_per_entity": 2,
            "vocab_size": 256
        },
        "induction": {
            "k_aspects": 3,
            "hidden": 8,
            "negatives": 2,
            "max_epochs": 1,
            "batch_size": 4,
            "dev_fraction": 0.0,
            "warmup_steps": 2
        },
        "synthesis": {
            "n_reviews": 2,
            "min_len": 1,
            "max_len": 10000,
            "forbid_first_person": false,
            "dataset_size": 4
        },
        "summarizer": {
            "max_epochs": 1,
            "batch_size": 4,
            "dev_fraction": 0.0,
            "beam_size": 1,
            "max_decode_len": 8,
            "warmup_steps": 2
        },
        "eval": {"alphas": [1.0, 10.0], "samples": 3}
    })
}

fn write_config(dir: &Path, value: &Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.display().to_string()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn version_and_help_exit_zero() {
    assert_exit(&opsum(&["--version"]), 0);
    assert_exit(&opsum(&["--help"]), 0);
}

#[test]
fn bad_flags_and_unknown_commands_exit_one() {
    assert_exit(&opsum(&["synthesize", "--size", "notanumber"]), 1);
    assert_exit(&opsum(&["frobnicate"]), 1);
    assert_exit(&opsum(&["ablate", "--variants", "full,bogus", "--out-dir", "/tmp/nope"]), 1);
}

#[test]
fn invalid_config_and_invalid_out_dir_fail_before_any_work() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"sede": 1}"#).unwrap();
    assert_exit(&opsum(&["gen-corpus", "--config", cfg.to_str().unwrap()]), 1);

    let file = tmp.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let out = opsum(&["gen-corpus", "--out-dir", file.to_str().unwrap()]);
    assert_exit(&out, 1);
    assert_eq!(fs::read_to_string(&file).unwrap(), "x", "input was mutated");
}

#[test]
fn missing_upstream_artifacts_name_the_producing_command() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(tmp.path()));
    let out = opsum(&["synthesize", "--config", &cfg]);
    assert_exit(&out, 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("opsum gen-corpus"), "stderr: {stderr}");
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(tmp.path()));
    assert_exit(&opsum(&["gen-corpus", "--config", &cfg]), 0);
    let out_dir = tmp.path().join("out");
    let base = fs::read(out_dir.join("corpus.jsonl")).unwrap();

    let other = tmp.path().join("other");
    let out = opsum(&[
        "gen-corpus",
        "--config",
        &cfg,
        "--seed",
        "99",
        "--out-dir",
        other.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(other.join("manifest_gen-corpus.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], json!(99));
    assert_eq!(manifest["config"]["seed"], json!(99));
    assert_ne!(fs::read(other.join("corpus.jsonl")).unwrap(), base);
}

#[test]
fn rerun_with_same_seed_rewrites_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(tmp.path()));
    assert_exit(&opsum(&["gen-corpus", "--config", &cfg]), 0);
    let corpus = tmp.path().join("out/corpus.jsonl");
    let vocab = tmp.path().join("out/vocab.json");
    let before = (fs::read(&corpus).unwrap(), fs::read(&vocab).unwrap());
    assert_exit(&opsum(&["gen-corpus", "--config", &cfg]), 0);
    assert_eq!(fs::read(&corpus).unwrap(), before.0);
    assert_eq!(fs::read(&vocab).unwrap(), before.1);
}

#[test]
fn synthesize_size_flag_controls_dataset_lines() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(tmp.path()));
    assert_exit(&opsum(&["gen-corpus", "--config", &cfg]), 0);
    assert_exit(&opsum(&["train-induce", "--config", &cfg]), 0);
    assert_exit(&opsum(&["synthesize", "--config", &cfg, "--size", "5"]), 0);
    let dataset = tmp.path().join("out/dataset.jsonl");
    assert_eq!(lines(&dataset), 5);
    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("out/manifest_synthesize.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["synthesis"]["dataset_size"], json!(5));
}

#[test]
fn pipeline_summarizes_the_single_eval_entity_into_one_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(tmp.path()));
    let out = opsum(&["pipeline", "--config", &cfg]);
    assert_exit(&out, 0);
    let out_dir = tmp.path().join("out");
    // One held-out entity with eight reviews comes back as one summary row.
    assert_eq!(lines(&out_dir.join("eval_reviews.jsonl")), 8);
    assert_eq!(lines(&out_dir.join("summaries.jsonl")), 1);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("eval_report.json")).unwrap())
            .unwrap();
    let r1 = report["means"]["r1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&r1), "r1 {r1}");
    for name in ["gen-corpus", "train-induce", "synthesize", "train-sum", "summarize", "evaluate", "pipeline"] {
        assert!(out_dir.join(format!("manifest_{name}.json")).exists(), "missing {name} manifest");
    }
}

#[test]
fn evaluating_summaries_against_themselves_scores_a_perfect_f1() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    fs::create_dir_all(&out_dir).unwrap();
    let text = "the chair was comfortable and the desk sturdy.";
    let rows = [
        json!({"entity_id": "e9", "summary": text, "p_a": [0.5, 0.5], "p_s": [1.0]}),
        json!({"entity_id": "e9", "references": [text, "another view entirely."]}),
        json!({
            "entity_id": "e9", "review_id": "e9-r0",
            "text": "some review text.", "rating": 5
        }),
    ];
    for (name, row) in ["summaries.jsonl", "references.jsonl", "eval_reviews.jsonl"]
        .iter()
        .zip(rows.iter())
    {
        fs::write(out_dir.join(name), format!("{row}\n")).unwrap();
    }
    assert_exit(&opsum(&["evaluate", "--out-dir", out_dir.to_str().unwrap()]), 0);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("eval_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["means"]["r1"].as_f64().unwrap(), 1.0);
    assert_eq!(report["means"]["r2"].as_f64().unwrap(), 1.0);
    assert_eq!(report["means"]["rl"].as_f64().unwrap(), 1.0);
    assert!(out_dir.join("baseline_report.json").exists());
}
