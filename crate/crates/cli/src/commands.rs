use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;

use cryptogram::checkpoint::load_checkpoint;
use cryptogram::cipher::{decode, encode, SymbolId};
use cryptogram::corpus::{
    build_segments, clean_corpus, read_raw_lines, read_records, split, write_records, CleanOptions, TextRecord,
    DEFAULT_MAX_LEN, DEFAULT_MIN_LEN, DEFAULT_SEGMENTS_PER_LANGUAGE, DEFAULT_TRAIN_FRAC,
};
use cryptogram::training::{run_generalization_suite, TrainConfig, Trainer};
use cryptogram::HeadKind;

use crate::manifest::{write_json, RunManifest};
use crate::{parse_head, usage};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw `.txt` (one text per line) or `.jsonl` (`{"text", "lang"}`) files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_LEN)]
    pub min_len: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Fold accented letters to their base letter instead of dropping the line.
    #[arg(long)]
    pub fold_accents: bool,
    /// Build word-aligned segments of this many characters per language.
    #[arg(long, value_name = "LEN")]
    pub segments: Option<usize>,
    /// Per-language segment cap in segment mode.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS_PER_LANGUAGE)]
    pub segment_cap: usize,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRAC)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "runs/ingest")]
    pub out_dir: PathBuf,
}

pub fn ingest(args: IngestArgs, argv: &[String]) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&args.train_frac) {
        return Err(usage("--train-frac must lie in [0, 1]"));
    }
    let mut raw = Vec::new();
    for path in &args.inputs {
        raw.extend(read_raw_lines(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let mut opts = CleanOptions { min_len: args.min_len, max_len: args.max_len, fold_accents: args.fold_accents };
    let lines: Vec<(String, Option<String>)> = match args.segments {
        None => raw.into_iter().map(|r| (r.text, r.lang)).collect(),
        Some(len) => {
            // Segments are accent-folded while they are built.
            opts.fold_accents = true;
            let mut by_lang: BTreeMap<Option<String>, Vec<String>> = BTreeMap::new();
            for r in raw {
                by_lang.entry(r.lang).or_default().push(r.text);
            }
            by_lang
                .into_iter()
                .flat_map(|(lang, rows)| {
                    build_segments(&rows, len, Some(args.segment_cap)).into_iter().map(move |s| (s, lang.clone()))
                })
                .collect()
        }
    };
    let (records, report) = clean_corpus(lines.iter().map(|(t, l)| (t.as_str(), l.as_deref())), &opts)?;
    let (train, test) = split(records, args.train_frac, args.seed);
    std::fs::create_dir_all(&args.out_dir)?;
    let mut manifest = RunManifest::new("ingest", argv, &args.out_dir);
    for (name, recs) in [("train.jsonl", &train), ("test.jsonl", &test)] {
        write_records(&args.out_dir.join(name), recs)?;
        manifest.output(name);
    }
    write_json(&args.out_dir.join("ingest_report.json"), &report)?;
    manifest.output("ingest_report.json");
    manifest.seeds = serde_json::json!({ "split": args.seed });
    manifest.config = serde_json::json!({
        "clean": opts,
        "segments": args.segments,
        "segment_cap": args.segment_cap,
        "train_frac": args.train_frac,
        "inputs": args.inputs,
    });
    manifest.write()?;
    println!(
        "kept {} of {} lines: {} train, {} test -> {}",
        report.kept,
        report.input_lines,
        train.len(),
        test.len(),
        args.out_dir.display()
    );
    Ok(())
}

/// Tokenized records of a corpus file, optionally truncated to `limit`.
pub fn load_tokens(path: &Path, limit: Option<usize>) -> anyhow::Result<Vec<Vec<SymbolId>>> {
    let records: Vec<TextRecord> = read_records(path).with_context(|| format!("reading {}", path.display()))?;
    let n = limit.unwrap_or(records.len()).min(records.len());
    records[..n].iter().map(|r| r.tokens().map_err(Into::into)).collect()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML or JSON training config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training records (`train.jsonl` from `ingest`).
    #[arg(long)]
    pub train: PathBuf,
    /// Plaintexts for validation accuracy on unseen ciphers.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model size preset, e.g. 0.5M or 3.4M.
    #[arg(long)]
    pub size: Option<String>,
    /// `standard` or `bijective`.
    #[arg(long, value_parser = parse_head)]
    pub head: Option<HeadKind>,
    /// Train on a fixed pool of this many ciphers.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value = "runs/train")]
    pub out_dir: PathBuf,
}

fn build_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut config = match &args.config {
        Some(p) => TrainConfig::from_file(p).with_context(|| format!("loading config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = &args.size {
        config.size = v.clone();
        config.model = None;
    }
    if let Some(v) = args.head {
        config.head = v;
    }
    if args.pool_size.is_some() {
        config.cipher_pool_size = args.pool_size;
    }
    config.validate()?;
    Ok(config)
}

pub fn train(args: TrainArgs, argv: &[String]) -> anyhow::Result<()> {
    let config = build_config(&args)?;
    let train = load_tokens(&args.train, None)?;
    let validation = match &args.validation {
        Some(p) => load_tokens(p, None)?,
        None => Vec::new(),
    };
    let mut manifest = RunManifest::new("train", argv, &args.out_dir);
    manifest.config = serde_json::to_value(&config)?;
    manifest.seeds = serde_json::json!({ "base": config.seed });
    manifest.write()?;
    let trainer = match &args.resume {
        Some(ck) => Trainer::resume(config, ck, train, &validation)?,
        None => Trainer::new(config, train, &validation)?,
    };
    let mut trainer = trainer.with_output(&args.out_dir)?;
    let summary = trainer.run()?;
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    manifest.output("metrics.csv");
    manifest.output("checkpoints/final.ckpt");
    manifest.output("summary.json");
    manifest.write()?;
    println!(
        "trained {} steps: final loss {:.4}{} -> {}",
        summary.steps,
        summary.final_loss,
        summary.final_val_acc.map_or(String::new(), |a| format!(", validation accuracy {a:.4}")),
        args.out_dir.join("checkpoints/final.ckpt").display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct GeneralizeArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated pool sizes; `unlimited` means a fresh cipher per example.
    #[arg(long, value_delimiter = ',', default_values_t = ["10".to_owned(), "100".to_owned(), "1000".to_owned(), "unlimited".to_owned()])]
    pub pool_sizes: Vec<String>,
}

fn parse_pool(s: &str) -> anyhow::Result<Option<usize>> {
    match s.trim() {
        "unlimited" | "none" => Ok(None),
        n => n.parse().map(Some).map_err(|_| usage(format!("bad pool size {n:?}"))),
    }
}

pub fn generalize(args: GeneralizeArgs, argv: &[String]) -> anyhow::Result<()> {
    let pools = args.pool_sizes.iter().map(|s| parse_pool(s)).collect::<anyhow::Result<Vec<_>>>()?;
    let base = build_config(&args.train)?;
    let train = load_tokens(&args.train.train, None)?;
    let validation = match &args.train.validation {
        Some(p) => load_tokens(p, None)?,
        None => return Err(usage("generalize needs --validation")),
    };
    let out = &args.train.out_dir;
    let mut manifest = RunManifest::new("generalize", argv, out);
    manifest.config = serde_json::to_value(&base)?;
    manifest.seeds = serde_json::json!({ "base": base.seed });
    manifest.write()?;
    let runs = run_generalization_suite(&pools, &base, &train, &validation, Some(out))?;
    for r in &runs {
        let label = r.pool_size.map_or("unlimited".to_owned(), |k| k.to_string());
        println!("pool {label:>9}: final validation accuracy {}", r.final_val_acc.map_or("n/a".into(), |a| format!("{a:.4}")));
        manifest.output(format!("pool-{label}/metrics.csv"));
    }
    manifest.output("generalization.csv");
    manifest.write()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DecryptArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Ciphertext; read from `--file` or stdin when absent.
    pub text: Option<String>,
    /// Decode each nonempty line of this file.
    #[arg(long, conflicts_with = "text")]
    pub file: Option<PathBuf>,
}

pub fn decrypt(args: DecryptArgs) -> anyhow::Result<()> {
    let raw = match (&args.text, &args.file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        (None, None) => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let lines: Vec<&str> = raw.lines().map(str::trim_end).filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return Err(usage("no ciphertext given"));
    }
    let model = load_checkpoint::<f32>(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?
        .model;
    for line in lines {
        let upper = line.to_uppercase();
        if upper != line {
            eprintln!("note: input converted to uppercase");
        }
        let tokens = encode(&upper)?;
        let max = model.config().max_len;
        if tokens.len() > max {
            return Err(cryptogram::Error::TooLong { len: tokens.len(), max }.into());
        }
        let d = model.decode(&tokens)?;
        println!("{}", decode(&d.prediction));
        if let Some(key) = d.key() {
            println!("key: {}", key.to_key_string());
        }
    }
    Ok(())
}
