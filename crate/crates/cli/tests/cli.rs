use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cryptogram"));
    c.env("RUST_LOG", "warn");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cryptogram")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small model so the end-to-end tests stay fast.
const TINY: &str = r#"
steps = 6
batch_size = 4
lr = 1e-3
checkpoint_every = 3
log_every = 2
validate_every = 3
validation_size = 8

[model]
d_model = 16
n_layers = 2
n_heads = 2
ffn_dim = 32
"#;

fn ingest(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    ok(&run(&["ingest", s(&fixture("quotes.txt")), "--train-frac", "0.8", "--out-dir", s(&out)]));
    out
}

fn train(dir: &Path, data: &Path, head: &str) -> PathBuf {
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.join(format!("run-{head}"));
    ok(&run(&[
        "train",
        "--config",
        s(&cfg),
        "--train",
        s(&data.join("train.jsonl")),
        "--validation",
        s(&data.join("test.jsonl")),
        "--head",
        head,
        "--out-dir",
        s(&out),
    ]));
    out.join("checkpoints/final.ckpt")
}

#[test]
fn ingest_is_deterministic_and_honors_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let a = ingest(dir.path());
    let first = std::fs::read_to_string(a.join("train.jsonl")).unwrap();
    ok(&run(&["ingest", s(&fixture("quotes.txt")), "--train-frac", "0.8", "--out-dir", s(&a)]));
    assert_eq!(first, std::fs::read_to_string(a.join("train.jsonl")).unwrap());
    assert!(a.join("manifest.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("ingest_report.json")).unwrap()).unwrap();
    assert!(report["dropped"]["too_short"].as_u64().unwrap() >= 1);

    let b = dir.path().join("bounded");
    ok(&run(&["ingest", s(&fixture("quotes.txt")), "--min-len", "40", "--max-len", "60", "--out-dir", s(&b)]));
    for f in ["train.jsonl", "test.jsonl"] {
        for line in std::fs::read_to_string(b.join(f)).unwrap().lines() {
            let r: serde_json::Value = serde_json::from_str(line).unwrap();
            let n = r["text"].as_str().unwrap().chars().count();
            assert!((40..=60).contains(&n), "{n}");
        }
    }
}

#[test]
fn segment_mode_builds_segments_per_language() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg");
    ok(&run(&["ingest", s(&fixture("multilingual.jsonl")), "--segments", "60", "--train-frac", "1", "--out-dir", s(&out)]));
    let text = std::fs::read_to_string(out.join("train.jsonl")).unwrap();
    let langs: std::collections::BTreeSet<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["lang"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(langs.len(), 4);
    assert!(text.lines().all(|l| !l.contains('é')));
}

#[test]
fn train_decrypt_and_analyze_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(dir.path());
    let ck = train(dir.path(), &data, "bijective");
    let run_dir = ck.parent().unwrap().parent().unwrap();
    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 7);
    assert!(metrics.starts_with("step,loss,lr,wall_ms,val_acc"));
    assert!(run_dir.join("checkpoints/step-0000003.ckpt").exists());
    assert!(run_dir.join("manifest.json").exists());

    let out = ok(&run(&["decrypt", "--checkpoint", s(&ck), "rj hrif, yf qdaf sef bfvs kftrvrnjv."]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0].len(), "RJ HRIF, YF QDAF SEF BFVS KFTRVRNJV.".len());
    assert!(lines[1].starts_with("key: ") && lines[1].len() == 5 + 26);
    let o = run(&["decrypt", "--checkpoint", s(&ck), "abc"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("uppercase"));

    let ad = dir.path().join("analysis");
    let test = data.join("test.jsonl");
    let common = ["--checkpoint", s(&ck), "--data", s(&test), "--out-dir", s(&ad)];
    let analyze = |task: &[&str]| {
        let mut args = vec!["analyze"];
        args.extend_from_slice(task);
        args.extend_from_slice(&common);
        ok(&run(&args))
    };
    analyze(&["eval", "--baseline"]);
    assert!(ad.join("eval_bins.csv").exists() && ad.join("baseline_eval.json").exists());
    analyze(&["early-exit", "--samples", "2"]);
    assert!(ad.join("early_exit_curve.csv").exists());
    analyze(&["attn"]);
    assert!(ad.join("attention.npy").exists());
    analyze(&["letter-profile"]);
    assert_eq!(std::fs::read_to_string(ad.join("letter_profile.csv")).unwrap().lines().count(), 27);
    analyze(&["bench", "--n", "3", "--len", "20", "--repeats", "2"]);
    let bench: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ad.join("bench.json")).unwrap()).unwrap();
    assert!(bench["letters_per_second"].as_f64().unwrap() > 0.0);
    analyze(&["key", "--text", "RJ HRIF, YF QDAF SEF BFVS."]);
    assert!(ad.join("key_scores.csv").exists());
    analyze(&[
        "probe",
        "--kind",
        "mlp",
        "--layers",
        "all",
        "--steps",
        "3",
        "--batch-size",
        "2",
        "--train-data",
        s(&data.join("train.jsonl")),
        "--plot-data",
    ]);
    let sim = std::fs::read_to_string(ad.join("probe_similarity.csv")).unwrap();
    assert_eq!(sim.lines().next().unwrap(), "layer,n1,n2,n3,n4,n5,n6,n7,n8");
    assert_eq!(sim.lines().count(), 3);
}

#[test]
fn standard_checkpoint_has_no_key() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(dir.path());
    let ck = train(dir.path(), &data, "standard");
    let out = ok(&run(&["decrypt", "--checkpoint", s(&ck), "XLI GEX."]));
    assert_eq!(out.lines().count(), 1);
    let o = run(&["analyze", "key", "--checkpoint", s(&ck), "--text", "ABC", "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pool_size_flag_selects_generalization_mode() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(dir.path());
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("pool");
    ok(&run(&["train", "--config", s(&cfg), "--train", s(&data.join("train.jsonl")), "--pool-size", "10", "--out-dir", s(&out)]));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["cipher_pool_size"], 10);
}

#[test]
fn exit_codes_separate_usage_config_and_runtime() {
    let dir = tempfile::tempdir().unwrap();
    // Usage: unknown subcommand, empty ciphertext.
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let missing = dir.path().join("missing.ckpt");
    assert_eq!(run(&["decrypt", "--checkpoint", s(&missing), "   "]).status.code(), Some(2));
    // Config: every bad field is listed.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "batch_size = 0\ntau = -1.0\n").unwrap();
    let o = run(&["train", "--config", s(&bad), "--train", s(&fixture("quotes.txt"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("batch_size") && err.contains("tau"), "{err}");
    // Runtime: unreadable checkpoint.
    assert_eq!(run(&["decrypt", "--checkpoint", s(&missing), "ABC"]).status.code(), Some(1));
}
