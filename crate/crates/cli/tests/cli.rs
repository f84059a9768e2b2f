//! The `emoji-predict` binary end to end.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_emoji-predict"))
        .args(args)
        .current_dir(dir)
        .env_remove("EMOJI_GEN_URL")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_corpus(dir: &Path) {
    ok(dir, &["gen-corpus", "--classes", "20", "--examples", "2000", "--test-examples", "300", "--seed", "1", "--out", "c.jsonl", "--test-out", "t.jsonl"]);
}

const SMALL_MODEL: &[&str] = &["--buckets", "4096", "--embedding-dim", "16", "--hidden-dim", "16", "--epochs", "2"];

fn jsonl(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn user_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["train", "--corpus", "missing.jsonl", "--out", "m"]).status.code(), Some(1));
    std::fs::write(dir.path().join("junk.emoj"), b"not a model").unwrap();
    let out = run(dir.path(), &["predict", "--model", "junk.emoj", "--text", "hi"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn train_is_reproducible_and_eval_reports_requested_ks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    for out in ["m1.emoj", "m2.emoj"] {
        let mut args = vec!["train", "--corpus", "c.jsonl", "--out", out, "--seed", "7"];
        args.extend_from_slice(SMALL_MODEL);
        ok(d, &args);
    }
    assert_eq!(std::fs::read(d.join("m1.emoj")).unwrap(), std::fs::read(d.join("m2.emoj")).unwrap());

    ok(d, &["eval", "--model", "m1.emoj", "--test", "t.jsonl", "--k", "1,24", "--report", "r.jsonl"]);
    let records = jsonl(&d.join("r.jsonl"));
    let ks: Vec<u64> = records.iter().filter(|r| r["record"] == "cutoff").map(|r| r["k"].as_u64().unwrap()).collect();
    assert_eq!(ks, [1, 24]);
    for r in records.iter().filter(|r| r["record"] == "class") {
        let keys: Vec<&String> = r["hit_at"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["1", "24"]);
    }
}

#[test]
fn env_vars_stand_in_for_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_emoji-predict"))
        .args(["gen-corpus", "--test-examples", "0"])
        .current_dir(d)
        .env("EMOJI_CLASSES", "5")
        .env("EMOJI_EXAMPLES", "50")
        .env("EMOJI_OUT", "env.jsonl")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(jsonl(&d.join("env.jsonl")).len(), 50);
}

#[test]
fn predict_coverage_bench_and_simulate_run_on_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    let mut args = vec!["train", "--corpus", "c.jsonl", "--out", "m.emoj"];
    args.extend_from_slice(SMALL_MODEL);
    ok(d, &args);

    let out = ok(d, &["predict", "--model", "m.emoj", "--text", "good morning", "--k", "3"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["ranked"].as_array().unwrap().len(), 3);
    assert_eq!(v["model_version"].as_str().unwrap().len(), 16);

    ok(d, &["coverage", "--corpus", "c.jsonl", "--emit-csv", "cov.csv"]);
    let csv = std::fs::read_to_string(d.join("cov.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.trim_end().ends_with(",1"));

    ok(d, &["bench", "--model", "m.emoj", "--warmup-iters", "2", "--measured-iters", "3", "--report", "b.jsonl"]);
    assert_eq!(jsonl(&d.join("b.jsonl"))[0]["overall"]["samples"], 30);

    ok(d, &["simulate", "--model", "m.emoj", "--prompts", "t.jsonl", "--alphas", "0,0.5", "--users", "3", "--sessions", "10", "--emit-csv", "s.csv"]);
    assert_eq!(std::fs::read_to_string(d.join("s.csv")).unwrap().lines().count(), 3);
    let bad = run(d, &["simulate", "--model", "m.emoj", "--prompts", "t.jsonl", "--alphas", "1.0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn import_labels_raw_messages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("raw.txt"), "pizza night 🍕🎉\nno emoji here\n😂\nlove you ❤️\n").unwrap();
    ok(d, &["import", "--input", "raw.txt", "--out", "c.jsonl"]);
    let rows = jsonl(&d.join("c.jsonl"));
    let pairs: Vec<(&str, &str)> = rows.iter().map(|r| (r["text"].as_str().unwrap(), r["emoji"].as_str().unwrap())).collect();
    assert_eq!(pairs, [("pizza night", "🍕"), ("pizza night", "🎉"), ("love you", "❤️")]);
}

#[test]
fn augment_honours_review_gate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    ok(d, &["tags", "--corpus", "c.jsonl", "--out", "tags.jsonl"]);
    let gated = run(d, &["augment", "--corpus", "c.jsonl", "--tags", "tags.jsonl", "--out", "s.jsonl", "--require-review"]);
    assert_eq!(gated.status.code(), Some(1));
    std::fs::write(d.join("tags.jsonl.reviewed"), "").unwrap();
    ok(d, &["augment", "--corpus", "c.jsonl", "--tags", "tags.jsonl", "--out", "s.jsonl", "--require-review"]);
    assert!(jsonl(&d.join("s.jsonl")).iter().all(|r| r["origin"] == "synthetic"));
}

#[test]
fn full_pipeline_on_desk_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let start = Instant::now();
    ok(d, &["gen-corpus", "--classes", "200", "--seed", "7", "--out", "train.jsonl", "--test-out", "test.jsonl"]);
    ok(d, &["tags", "--corpus", "train.jsonl", "--out", "tags.jsonl"]);
    ok(d, &["augment", "--corpus", "train.jsonl", "--tags", "tags.jsonl", "--out", "synth.jsonl", "--seed", "7"]);
    ok(d, &["merge", "--base", "train.jsonl", "--synthetic", "synth.jsonl", "--out", "merged.jsonl"]);
    ok(d, &["train", "--corpus", "merged.jsonl", "--out", "model.emoj", "--seed", "7"]);
    ok(d, &["quantize", "--model", "model.emoj", "--out", "model.int8.emoj"]);
    let table = ok(d, &["eval", "--model", "model.int8.emoj", "--test", "test.jsonl", "--train-corpus", "train.jsonl", "--k", "1,24", "--report", "eval.jsonl"]);
    let elapsed = start.elapsed();
    eprintln!("{table}pipeline took {elapsed:?}");
    assert!(elapsed < Duration::from_secs(600), "{elapsed:?}");

    let cutoffs: Vec<serde_json::Value> = jsonl(&d.join("eval.jsonl")).into_iter().filter(|r| r["record"] == "cutoff").collect();
    let hit24 = cutoffs[1]["hit"].as_f64().unwrap();
    assert!(hit24 > cutoffs[0]["hit"].as_f64().unwrap() && hit24 <= 1.0);
    let float = std::fs::metadata(d.join("model.emoj")).unwrap().len();
    let int8 = std::fs::metadata(d.join("model.int8.emoj")).unwrap().len();
    assert!((int8 as f64) < 0.35 * float as f64);
}
