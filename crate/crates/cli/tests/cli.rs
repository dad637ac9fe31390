use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cfnt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfnt"))
        .args(args)
        .output()
        .expect("run cfnt")
}

fn ok(args: &[&str]) -> String {
    let out = cfnt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small generated instance shared by the decode tests.
fn small(dir: &Path, seed: &str) {
    ok(&[
        "gen",
        "--seed",
        seed,
        "--out",
        p(dir),
        "--utts",
        "30",
        "--lm-sentences",
        "400",
    ]);
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn top1(path: &Path) -> Vec<Value> {
    lines(path).into_iter().filter(|l| l["rank"] == 0).collect()
}

fn decode(dir: &Path, out: &str, extra: &[&str]) -> Vec<Value> {
    let out = dir.join(out);
    let model = dir.join("model.json");
    let scores = dir.join("scores.jsonl");
    let mut args = vec![
        "decode",
        "--model",
        p(&model),
        "--scores",
        p(&scores),
        "--out",
        p(&out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    top1(&out)
}

#[test]
fn gen_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    small(a.path(), "3");
    small(b.path(), "3");
    for f in [
        "vocab.txt",
        "names.txt",
        "model.json",
        "scores.jsonl",
        "refs.jsonl",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = TempDir::new().unwrap();
    small(c.path(), "4");
    assert_ne!(
        fs::read(a.path().join("scores.jsonl")).unwrap(),
        fs::read(c.path().join("scores.jsonl")).unwrap()
    );
}

#[test]
fn gen_small_vocabulary() {
    let d = TempDir::new().unwrap();
    let manifest = ok(&[
        "gen",
        "--seed",
        "1",
        "--out",
        p(d.path()),
        "--v",
        "8",
        "--names",
        "5",
    ]);
    let m: Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["names"], 5);
    let names = fs::read_to_string(d.path().join("names.txt")).unwrap();
    assert_eq!(names.lines().count(), 5);
    assert_eq!(
        fs::read_to_string(d.path().join("vocab.txt"))
            .unwrap()
            .lines()
            .count(),
        8
    );
}

#[test]
fn gen_rejects_infeasible_spec() {
    let d = TempDir::new().unwrap();
    let out = cfnt(&[
        "gen",
        "--out",
        p(d.path()),
        "--name-len",
        "9",
        "--u-max",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_name_list_matches_fnt() {
    let d = TempDir::new().unwrap();
    small(d.path(), "5");
    let f = decode(d.path(), "fnt.jsonl", &["--mode", "fnt"]);
    let c = decode(
        d.path(),
        "cfnt.jsonl",
        &["--mode", "cfnt", "--empty-name-list"],
    );
    assert_eq!(f.len(), c.len());
    for (a, b) in f.iter().zip(&c) {
        assert_eq!(a["tokens"], b["tokens"]);
        assert_eq!(a["score"], b["score"]);
    }
}

#[test]
fn class_decoding_marks_names_and_dynamic_beam_helps() {
    let d = TempDir::new().unwrap();
    small(d.path(), "6");
    let names = d.path().join("names.txt");
    let fixed = decode(
        d.path(),
        "fixed.jsonl",
        &["--mode", "cfnt", "--beam", "2", "--name-list", p(&names)],
    );
    let dynamic = decode(
        d.path(),
        "dynamic.jsonl",
        &[
            "--mode",
            "cfnt",
            "--beam",
            "2",
            "--dynamic-beam",
            "--name-list",
            p(&names),
        ],
    );
    let spans: usize = fixed
        .iter()
        .map(|l| l["name_spans"].as_array().unwrap().len())
        .sum();
    assert!(spans > 0);
    for (a, b) in fixed.iter().zip(&dynamic) {
        assert!(b["score"].as_f64().unwrap() >= a["score"].as_f64().unwrap());
    }
    let out = cfnt(&[
        "decode",
        "--mode",
        "cfnt",
        "--model",
        p(&d.path().join("word_model.json")),
        "--scores",
        p(&d.path().join("scores.jsonl")),
        "--name-list",
        p(&names),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_end_to_end() {
    let d = TempDir::new().unwrap();
    small(d.path(), "7");
    let names = d.path().join("names.txt");
    decode(
        d.path(),
        "hyps.jsonl",
        &["--mode", "cfnt", "--name-list", p(&names)],
    );
    let report = ok(&[
        "eval",
        "--refs",
        p(&d.path().join("refs.jsonl")),
        "--hyps",
        p(&d.path().join("hyps.jsonl")),
        "--name-list",
        p(&names),
        "--per-utt",
    ]);
    let r: Value = serde_json::from_str(&report).unwrap();
    assert!(r["wer"].as_f64().unwrap() < 0.2);
    assert!(r["entity_f1"].as_f64().unwrap() > 0.5);
    assert_eq!(r["per_utt"].as_array().unwrap().len(), 30);
}

#[test]
fn oracle_exit_codes() {
    let out = ok(&["oracle", "--trials", "50"]);
    let s: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(s["passed"], 50);
    assert!(s["max_abs_diff"].as_f64().unwrap() <= 1e-10);

    let d = TempDir::new().unwrap();
    small(d.path(), "8");
    ok(&[
        "oracle",
        "--trials",
        "20",
        "--model",
        p(&d.path().join("model.json")),
    ]);

    let bad = d.path().join("bad.json");
    fs::write(&bad, "{\"type\": \"ngram\"").unwrap();
    let out = cfnt(&["oracle", "--model", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn loss_composition() {
    let d = TempDir::new().unwrap();
    small(d.path(), "9");
    let model = d.path().join("word_model.json");
    let scores = d.path().join("scores.jsonl");
    let refs = d.path().join("refs.jsonl");
    let out = ok(&[
        "loss",
        "--lambda-f",
        "0",
        "--model",
        p(&model),
        "--scores",
        p(&scores),
        "--refs",
        p(&refs),
    ]);
    for l in out.lines() {
        let v: Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["j_f"], v["j_t"]);
    }
    let out = ok(&[
        "loss",
        "--model",
        p(&model),
        "--scores",
        p(&scores),
        "--refs",
        p(&refs),
    ]);
    for l in out.lines() {
        let v: Value = serde_json::from_str(l).unwrap();
        let (jt, jf, lm) = (
            v["j_t"].as_f64().unwrap(),
            v["j_f"].as_f64().unwrap(),
            v["lm_log_prob"].as_f64().unwrap(),
        );
        assert!((jf - (jt - 0.1 * lm)).abs() < 1e-9);
    }
    let out = cfnt(&[
        "loss",
        "--lambda-f",
        "-1",
        "--model",
        p(&model),
        "--scores",
        p(&scores),
        "--refs",
        p(&refs),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
