//! End-to-end runs of the `vld` binary on tiny configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vld")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const GEN: &str = "[generator]\nmax_ops = 3\nseed = 4\n\n[sizes]\ntrain = 120\nval = 12\n";

const REASON: &str = "pattern = \"cycle\"\nfactor = 2\n\n[model]\nembed_dim = 16\nhead_count = 2\nmlp_hidden_dim = 32\nbase_depth = 2\n\n\
[train]\nlearning_rate = 0.003\nbatch_size = 4\ncontext_length = 256\nmax_steps = 20\neval_interval = 10\n";

const CAPACITY: &str = "[dataset]\nn = 16\nk = 300\nseed = 1\n\n\
[train]\nlearning_rate = 0.005\nbatch_size = 4\ncontext_length = 16\nmax_steps = 20\neval_interval = 10\n\n\
[[models]]\nembed_dim = 8\nhead_count = 2\nmlp_hidden_dim = 16\nbase_depth = 1\n";

/// Corpus plus a trained checkpoint under `dir`.
fn trained(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let gen = write(dir, "gen.toml", GEN);
    let reason = write(dir, "reason.toml", REASON);
    let corpus = dir.join("corpus");
    ok(&vld(&["gen-igsm", "--config", s(&gen), "--out", s(&corpus)]));
    let train = dir.join("runs/train");
    ok(&vld(&[
        "reason-train",
        "--config",
        s(&reason),
        "--corpus",
        s(&corpus),
        "--out",
        s(&train),
    ]));
    (reason, corpus, train.join("model.ckpt"))
}

#[test]
fn gen_igsm_is_byte_identical_across_reruns_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let gen = write(dir.path(), "gen.toml", GEN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&vld(&["gen-igsm", "--config", s(&gen), "--out", s(&a)]));
    ok(&vld(&[
        "gen-igsm",
        "--config",
        s(&gen),
        "--out",
        s(&b),
        "--threads",
        "3",
    ]));
    for f in ["train.jsonl", "val.jsonl", "corpus_manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = dir.path().join("c");
    ok(&vld(&["gen-igsm", "--config", s(&gen), "--out", s(&c), "--seed", "5"]));
    assert_ne!(
        std::fs::read(a.join("train.jsonl")).unwrap(),
        std::fs::read(c.join("train.jsonl")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = vld(&[
        "gen-igsm",
        "--config",
        s(&dir.path().join("missing.toml")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let bad = write(dir.path(), "bad.toml", &format!("{GEN}\nunknown_key = 1\n"));
    let out = vld(&["gen-igsm", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let big = write(
        dir.path(),
        "big.toml",
        "[generator]\nmax_ops = 3\n\n[sizes]\ntrain = 1\nval = 1\nval_ops = 4\n",
    );
    let out = vld(&["gen-igsm", "--config", s(&big), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_ne!(vld(&["no-such-command"]).status.code(), Some(0));
}

#[test]
fn train_then_eval_reports_accuracy_and_refuses_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let (reason, corpus, ckpt) = trained(dir.path());
    let eval = dir.path().join("runs/eval");
    let out = vld(&[
        "reason-eval",
        "--config",
        s(&reason),
        "--corpus",
        s(&corpus),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&eval),
    ]);
    ok(&out);
    let summary = std::fs::read_to_string(eval.join("eval_summary.csv")).unwrap();
    let fields: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    let acc: f64 = fields[header.iter().position(|h| *h == "accuracy").unwrap()]
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(
        std::fs::read_to_string(eval.join("eval_records.jsonl"))
            .unwrap()
            .lines()
            .count(),
        12
    );

    // a second eval into the same directory is refused
    let again = vld(&[
        "reason-eval",
        "--config",
        s(&reason),
        "--corpus",
        s(&corpus),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&eval),
    ]);
    assert_eq!(again.status.code(), Some(2));

    // corpus with a different vocabulary
    let other = write(
        dir.path(),
        "other.toml",
        "[generator]\nmax_ops = 3\nlocations = [\"Attic\", \"Cellar\"]\nitems = [\"Red\", \"Blue\"]\n\n[sizes]\ntrain = 10\nval = 3\n",
    );
    let other_corpus = dir.path().join("other");
    ok(&vld(&["gen-igsm", "--config", s(&other), "--out", s(&other_corpus)]));
    let out = vld(&[
        "reason-eval",
        "--config",
        s(&reason),
        "--corpus",
        s(&other_corpus),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&dir.path().join("e2")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary"));

    // config whose schedule disagrees with the checkpoint
    let seq = write(dir.path(), "seq.toml", &REASON.replace("\"cycle\"", "\"sequence\""));
    let out = vld(&[
        "reason-eval",
        "--config",
        s(&seq),
        "--corpus",
        s(&corpus),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&dir.path().join("e3")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_merges_tables_and_grows_with_new_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (reason, corpus, ckpt) = trained(dir.path());
    let runs = dir.path().join("runs");
    let cap = write(dir.path(), "cap.toml", CAPACITY);
    ok(&vld(&[
        "capacity",
        "--config",
        s(&cap),
        "--out",
        s(&runs.join("capacity")),
    ]));
    let r1 = dir.path().join("r1");
    ok(&vld(&["report", "--runs", s(&runs), "--out", s(&r1)]));
    let r1b = dir.path().join("r1b");
    ok(&vld(&["report", "--runs", s(&runs), "--out", s(&r1b)]));
    for f in [
        "capacity_table.csv",
        "reasoning_table.csv",
        "plot_capacity_vs_params.csv",
        "plot_accuracy_vs_depth.csv",
    ] {
        assert_eq!(
            std::fs::read(r1.join(f)).unwrap(),
            std::fs::read(r1b.join(f)).unwrap(),
            "{f}"
        );
    }
    let cap_rows = |d: &Path| std::fs::read_to_string(d.join("capacity_table.csv")).unwrap();
    let reason_rows = |d: &Path| std::fs::read_to_string(d.join("reasoning_table.csv")).unwrap();
    assert_eq!(cap_rows(&r1).lines().count(), 2);
    assert!(cap_rows(&r1).lines().next().unwrap().ends_with("metric_bits"));
    assert_eq!(reason_rows(&r1).lines().count(), 1);

    ok(&vld(&[
        "reason-eval",
        "--config",
        s(&reason),
        "--corpus",
        s(&corpus),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&runs.join("eval")),
    ]));
    std::fs::create_dir_all(runs.join("broken")).unwrap();
    std::fs::write(runs.join("broken/run_manifest.json"), "{ not json").unwrap();
    let r2 = dir.path().join("r2");
    let out = vld(&["report", "--runs", s(&runs), "--out", s(&r2)]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: skipping"));
    assert_eq!(cap_rows(&r2), cap_rows(&r1));
    let rows = reason_rows(&r2);
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.lines().next().unwrap().ends_with("metric_accuracy"));
    let old = reason_rows(&r1);
    assert!(old.lines().skip(1).all(|r| rows.contains(r)));
}

#[test]
fn capacity_refuses_to_overwrite_and_empty_report_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cap = write(dir.path(), "cap.toml", CAPACITY);
    let out_dir = dir.path().join("cap");
    ok(&vld(&[
        "capacity",
        "--config",
        s(&cap),
        "--out",
        s(&out_dir),
        "--seed",
        "3",
        "--max-steps",
        "10",
    ]));
    let again = vld(&["capacity", "--config", s(&cap), "--out", s(&out_dir), "--seed", "3"]);
    assert_eq!(again.status.code(), Some(2));
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = vld(&["report", "--runs", s(&empty), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
}
