//! End-to-end runs of the `ssrl` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--set", "train.relations=rq",
    "--set", "embed=16",
    "--set", "hidden=16",
    "--set", "ff=32",
    "--set", "batch_size=8",
    "--set", "rollouts=4",
    "--set", "sl.epochs=1",
    "--set", "rl.batches=10",
];

fn ssrl(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssrl"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ssrl(args, &[]);
    assert!(out.status.success(), "ssrl {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic(tmp: &TempDir, name: &str) -> PathBuf {
    let dir = tmp.path().join(name);
    ok(&["make-synthetic", "--kind", "composition", "--size", "60", "--seed", "3", "--out", s(&dir)]);
    dir
}

fn train(data: &Path, out: &Path, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut args = vec!["train", "--graph", s(data), "--out", s(out)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = ssrl(&args, envs);
    assert!(o.status.success(), "train failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn make_synthetic_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (synthetic(&tmp, "a"), synthetic(&tmp, "b"));
    for f in ["train.txt", "dev.txt", "test.txt"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)));
    }
    let bad = ssrl(&["make-synthetic", "--kind", "spiral", "--out", s(&tmp.path().join("c"))], &[]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn gen_labels_covers_synthetic_queries() {
    let tmp = TempDir::new().unwrap();
    let data = synthetic(&tmp, "d");
    let cache = tmp.path().join("labels.bin");
    let out = ok(&["gen-labels", "--graph", s(&data), "--depth", "3", "--relations", "rq", "--out", s(&cache)]);
    let cov: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cov["fraction"], 1.0);
    assert!(cov["total"].as_u64().unwrap() > 0);
    assert!(cache.exists());

    let run = tmp.path().join("run");
    train(&data, &run, &["--labels", s(&cache)], &[]);
    let fresh = tmp.path().join("fresh");
    train(&data, &fresh, &[], &[]);
    assert_eq!(read(&run.join("checkpoint.bin")), read(&fresh.join("checkpoint.bin")));
}

#[test]
fn train_writes_artifacts_and_reproduces_from_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let data = synthetic(&tmp, "d");
    let run = tmp.path().join("run");
    train(&data, &run, &[], &[]);
    for f in ["resolved.cfg", "train_log.csv", "checkpoint.bin", "checkpoint_sl.bin", "curve_reward.csv", "curve_mrr.csv"] {
        assert!(run.join(f).exists(), "missing {f}");
    }

    let mut log = csv::ReaderBuilder::new().flexible(false).from_path(run.join("train_log.csv")).unwrap();
    let header: Vec<String> = log.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ssrl::output::TRAIN_LOG_HEADER);
    let rows: Vec<csv::StringRecord> = log.records().map(Result::unwrap).collect();
    assert!(rows.iter().any(|r| &r[0] == "sl") && rows.iter().any(|r| &r[0] == "rl"));
    for r in &rows {
        let reward: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&reward));
    }

    let again = tmp.path().join("again");
    let cfg = run.join("resolved.cfg");
    ok(&["train", "--config", s(&cfg), "--graph", s(&data), "--out", s(&again)]);
    for f in ["train_log.csv", "checkpoint.bin"] {
        assert_eq!(read(&run.join(f)), read(&again.join(f)), "{f} differs");
    }
    let without_out = |p: &Path| -> Vec<String> {
        fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with("out =")).map(String::from).collect()
    };
    assert_eq!(without_out(&cfg), without_out(&again.join("resolved.cfg")));
}

#[test]
fn resume_from_supervised_checkpoint_matches_full_run() {
    let tmp = TempDir::new().unwrap();
    let data = synthetic(&tmp, "d");
    let full = tmp.path().join("full");
    train(&data, &full, &[], &[]);
    let resumed = tmp.path().join("resumed");
    let sl = full.join("checkpoint_sl.bin");
    train(&data, &resumed, &["--resume", s(&sl)], &[]);
    assert_eq!(read(&full.join("checkpoint.bin")), read(&resumed.join("checkpoint.bin")));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let data = synthetic(&tmp, "d");
    let (one, four) = (tmp.path().join("one"), tmp.path().join("four"));
    train(&data, &one, &[], &[("SSRL_THREADS", "1")]);
    train(&data, &four, &[], &[("SSRL_THREADS", "4")]);
    for f in ["train_log.csv", "checkpoint.bin"] {
        assert_eq!(read(&one.join(f)), read(&four.join(f)), "{f} differs");
    }
}

#[test]
fn eval_and_paths_report_on_a_trained_model() {
    let tmp = TempDir::new().unwrap();
    let data = synthetic(&tmp, "d");
    let run = tmp.path().join("run");
    train(&data, &run, &[], &[]);
    let ck = run.join("checkpoint.bin");
    let out = ok(&["eval", "--checkpoint", s(&ck), "--graph", s(&data), "--per-query"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["count", "hits", "mrr", "splits", "per_relation", "unique_paths", "queries"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let mrr = report["mrr"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mrr));

    let test = fs::read_to_string(data.join("test.txt")).unwrap();
    let fields: Vec<&str> = test.lines().next().unwrap().split('\t').collect();
    let query = format!("{},{}", fields[0], fields[1]);
    let out = ok(&["paths", "--checkpoint", s(&ck), "--graph", s(&data), "--query", &query, "--top", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.is_empty() && text.lines().count() <= 3);
    assert!(text.lines().all(|l| l.starts_with(fields[0])));
}

#[test]
fn stats_on_a_chain() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("chain.txt");
    fs::write(&file, "a\tr\tb\nb\tr\tc\nc\tr\td\n").unwrap();
    let out = ok(&["stats", "--graph", s(&file)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["entity_count"], 4);
    assert_eq!(v["relation_count"], 1);
    assert_eq!(v["fact_count"], 3);
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let data = synthetic(&tmp, "d");
    let out = s(&tmp.path().join("o")).to_string();
    let bad_key = ssrl(&["train", "--graph", s(&data), "--out", &out, "--set", "nonsense=1"], &[]);
    assert_eq!(bad_key.status.code(), Some(2));
    let no_graph = ssrl(&["train", "--out", &out], &[]);
    assert_eq!(no_graph.status.code(), Some(2));
    let missing = ssrl(&["stats", "--graph", s(&tmp.path().join("nope.txt"))], &[]);
    assert_eq!(missing.status.code(), Some(3));
    let broken = tmp.path().join("broken.txt");
    fs::write(&broken, "a\tr\n").unwrap();
    assert_eq!(ssrl(&["stats", "--graph", s(&broken)], &[]).status.code(), Some(3));
    let garbage = tmp.path().join("garbage.bin");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    let ev = ssrl(&["eval", "--checkpoint", s(&garbage), "--graph", s(&data)], &[]);
    assert_eq!(ev.status.code(), Some(3));
}
