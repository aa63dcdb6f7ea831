use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Subcommand};
use log::info;

use cryptogram::analysis::{
    early_exit_curve, early_exit_table, eval_cipher, evaluate, export_attention, harvest_activations,
    letter_error_profile, probe_study, recover_key, throughput_bench, write_curve_csv, write_letter_profile_csv,
    BenchSpec, EvalReport, FrequencyRankDecoder, LetterFrequencies, ProbeKind, ProbeSpec,
};
use cryptogram::checkpoint::load_checkpoint;
use cryptogram::cipher::{decode, encode};
use cryptogram::exec::Execution;
use cryptogram::Model;

use crate::commands::load_tokens;
use crate::manifest::{write_json, RunManifest};
use crate::usage;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub task: Task,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Test records (`test.jsonl` from `ingest`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Use only the first N records.
    #[arg(long, global = true)]
    pub limit: Option<usize>,
    /// Seed of the evaluation ciphers.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Also write tidy long-format tables for plotting.
    #[arg(long, global = true)]
    pub plot_data: bool,
    /// Run without the thread pool.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[arg(long, global = true, default_value = "runs/analysis")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Task {
    /// Symbol error rates by length bin.
    Eval {
        /// Also score the frequency-rank baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Decode intermediate layers through the final pipeline.
    EarlyExit {
        /// Number of records rendered as per-layer tables.
        #[arg(long, default_value_t = 5)]
        samples: usize,
    },
    /// Train per-layer probes and compare their n-gram statistics to the plaintext.
    Probe {
        #[arg(long, default_value = "linear")]
        kind: String,
        /// `all` or a comma-separated list; 0 is the embedding output.
        #[arg(long, default_value = "all")]
        layers: String,
        /// Records the probes are trained on.
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        train_limit: Option<usize>,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 96)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long, default_value_t = 8)]
        max_n: usize,
    },
    /// Export row-normalized attention maps for one input.
    Attn {
        /// Ciphertext; defaults to the first record of `--data` under its evaluation cipher.
        #[arg(long)]
        text: Option<String>,
    },
    /// Per-letter error weighted by English letter frequency.
    LetterProfile {
        /// Alternative `letter,weight` CSV.
        #[arg(long)]
        freq_table: Option<PathBuf>,
    },
    /// Decoding throughput on random letter sequences.
    Bench {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long = "len", default_value_t = 300)]
        length: usize,
        #[arg(long, default_value_t = 50)]
        repeats: usize,
        /// Decode sequences concurrently instead of in a single stream.
        #[arg(long)]
        batched: bool,
    },
    /// Full key and assignment matrix recovered by a bijective model.
    Key {
        #[arg(long)]
        text: String,
    },
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Eval { .. } => "eval",
            Task::EarlyExit { .. } => "early-exit",
            Task::Probe { .. } => "probe",
            Task::Attn { .. } => "attn",
            Task::LetterProfile { .. } => "letter-profile",
            Task::Bench { .. } => "bench",
            Task::Key { .. } => "key",
        }
    }
}

fn write_eval(report: &EvalReport, stem: &str, out: &std::path::Path, m: &mut RunManifest, long: bool) -> anyhow::Result<()> {
    write_json(&out.join(format!("{stem}.json")), report)?;
    let mut w = csv::Writer::from_path(out.join(format!("{stem}_bins.csv")))?;
    w.write_record(["bin", "count", "median_ser", "p16_ser", "p84_ser"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for b in &report.bins {
        w.write_record([b.label.clone(), b.count.to_string(), opt(b.median_ser), opt(b.p16_ser), opt(b.p84_ser)])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join(format!("{stem}_sequences.csv")))?;
    for s in &report.sequences {
        w.serialize(s)?;
    }
    w.flush()?;
    m.output(format!("{stem}.json"));
    m.output(format!("{stem}_bins.csv"));
    m.output(format!("{stem}_sequences.csv"));
    if long {
        let mut w = csv::Writer::from_path(out.join(format!("{stem}_histogram_long.csv")))?;
        w.write_record(["bin", "errors", "sequences"])?;
        for b in &report.bins {
            for (e, n) in &b.error_histogram {
                w.write_record([b.label.clone(), e.to_string(), n.to_string()])?;
            }
        }
        w.flush()?;
        m.output(format!("{stem}_histogram_long.csv"));
    }
    Ok(())
}

fn print_eval(name: &str, r: &EvalReport) {
    println!("{name}:");
    for b in &r.bins {
        let median = b.median_ser.map_or("-".into(), |v| format!("{:.4}", v));
        println!("  {:>8}  n={:<6} median SER {median}", b.label, b.count);
    }
    for a in [&r.short, &r.long] {
        let boot = a.bootstrap.as_ref().map_or(String::new(), |b| format!(" (bootstrap {:.4} +/- {:.4})", b.mean, b.std));
        println!("  {:>8}  n={:<6} mean SER {}{boot}", a.label, a.count, a.mean_ser.map_or("-".into(), |v| format!("{v:.4}")));
    }
}

pub fn run(args: AnalyzeArgs, argv: &[String]) -> anyhow::Result<()> {
    let c = &args.common;
    let exec = if c.sequential { Execution::Sequential } else { Execution::Parallel };
    let out = &c.out_dir;
    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new(&format!("analyze {}", args.task.name()), argv, out);
    manifest.seeds = serde_json::json!({ "eval_ciphers": c.seed });

    let model = || -> anyhow::Result<Model<f32>> {
        let path = c.checkpoint.as_ref().ok_or_else(|| usage("--checkpoint is required"))?;
        Ok(load_checkpoint::<f32>(path).with_context(|| format!("loading {}", path.display()))?.model)
    };
    let data = || -> anyhow::Result<Vec<Vec<u8>>> {
        let path = c.data.as_ref().ok_or_else(|| usage("--data is required"))?;
        load_tokens(path, c.limit)
    };

    match &args.task {
        Task::Eval { baseline } => {
            let (model, data) = (model()?, data()?);
            let report = evaluate(&model, &data, c.seed, exec)?;
            print_eval("model", &report);
            write_eval(&report, "eval", out, &mut manifest, c.plot_data)?;
            if *baseline {
                let base = evaluate(&FrequencyRankDecoder::english(), &data, c.seed, exec)?;
                print_eval("frequency-rank baseline", &base);
                write_eval(&base, "baseline_eval", out, &mut manifest, c.plot_data)?;
            }
        }
        Task::EarlyExit { samples } => {
            let (model, data) = (model()?, data()?);
            let mut tables = Vec::new();
            let mut text = String::new();
            for (i, plain) in data.iter().take(*samples).enumerate() {
                let t = early_exit_table(&model, &eval_cipher(c.seed, i).apply(plain)?)?;
                text.push_str(&format!("plaintext  {}\n{}\n", decode(plain), t.render()));
                tables.push(t);
            }
            print!("{text}");
            fs::write(out.join("early_exit.txt"), &text)?;
            write_json(&out.join("early_exit.json"), &tables)?;
            let curve = early_exit_curve(&model, &data, c.seed, exec)?;
            write_curve_csv(&curve, &out.join("early_exit_curve.csv"))?;
            write_json(&out.join("early_exit_curve.json"), &curve)?;
            for l in &curve.layers {
                println!("layer {:>2}: mean SER {:.4}", l.layer, l.mean_ser);
            }
            println!("monotone: {}", curve.monotone);
            for f in ["early_exit.txt", "early_exit.json", "early_exit_curve.csv", "early_exit_curve.json"] {
                manifest.output(f);
            }
        }
        Task::Probe { kind, layers, train_data, train_limit, steps, batch_size, lr, hidden_dim, max_n } => {
            let kind: ProbeKind = kind.parse()?;
            let model = model()?;
            let n = model.config().n_layers;
            let layers: Vec<usize> = if layers == "all" {
                (1..=n).collect()
            } else {
                layers
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| usage(format!("bad layer {s:?}"))))
                    .collect::<anyhow::Result<_>>()?
            };
            let test = data()?;
            let train_path = train_data.as_ref().ok_or_else(|| usage("--train-data is required for probes"))?;
            let train = load_tokens(train_path, *train_limit)?;
            // Different cipher seeds keep probe training and testing ciphers apart.
            let train_acts = harvest_activations(&model, &train, c.seed.wrapping_add(1), &layers, exec)?;
            let test_acts = harvest_activations(&model, &test, c.seed, &layers, exec)?;
            let spec = ProbeSpec {
                hidden_dim: *hidden_dim,
                steps: *steps,
                batch_size: *batch_size,
                lr: *lr,
                seed: c.seed,
                ..ProbeSpec::new(kind, 0)
            };
            info!("training {} {kind:?} probes for {steps} steps", layers.len());
            let ns: Vec<usize> = (1..=*max_n).collect();
            let study = probe_study(&spec, &train_acts, &test_acts, &ns, exec)?;
            for r in &study.results {
                println!("layer {:>2}: probe SER {:.4}, final loss {:.4}", r.layer, r.mean_ser, r.final_loss.unwrap_or(f64::NAN));
            }
            write_json(&out.join("probe_results.json"), &study)?;
            study.similarity.write_csv(&out.join("probe_similarity.csv"), false)?;
            study.similarity.write_csv(&out.join("probe_similarity_deltas.csv"), true)?;
            for f in ["probe_results.json", "probe_similarity.csv", "probe_similarity_deltas.csv"] {
                manifest.output(f);
            }
            if c.plot_data {
                study.similarity.write_long_csv(&out.join("probe_similarity_long.csv"))?;
                manifest.output("probe_similarity_long.csv");
            }
            manifest.config = serde_json::to_value(&spec)?;
        }
        Task::Attn { text } => {
            let model = model()?;
            let tokens = match text {
                Some(t) => encode(&t.to_uppercase())?,
                None => {
                    let data = data()?;
                    let first = data.first().ok_or(cryptogram::Error::EmptyCorpus)?;
                    eval_cipher(c.seed, 0).apply(first)?
                }
            };
            let maps = export_attention(&model, &tokens)?;
            maps.export(out, "attention")?;
            println!(
                "{} maps ({} layers x {} heads) for {} symbols, max row-sum deviation {:.2e}",
                maps.n_maps(),
                maps.n_layers(),
                maps.n_heads(),
                tokens.len(),
                maps.max_row_deviation()
            );
            fs::write(out.join("attention_input.txt"), decode(&tokens))?;
            for f in ["attention.csv", "attention.npy", "attention_input.txt"] {
                manifest.output(f);
            }
        }
        Task::LetterProfile { freq_table } => {
            let freqs = match freq_table {
                Some(p) => LetterFrequencies::from_file(p)?,
                None => LetterFrequencies::english(),
            };
            let (model, data) = (model()?, data()?);
            let profile = letter_error_profile(&model, &data, c.seed, &freqs, exec)?;
            if profile.degenerate {
                println!("no letter errors: profile is undefined and reported as zeros");
            }
            for r in &profile.rows {
                println!("{}  ser {:.4}  freq {:.4}  profile {:+.4}", r.letter, r.ser, r.frequency, r.profile);
            }
            write_letter_profile_csv(&profile, &out.join("letter_profile.csv"))?;
            write_json(&out.join("letter_profile.json"), &profile)?;
            manifest.output("letter_profile.csv");
            manifest.output("letter_profile.json");
        }
        Task::Bench { n, length, repeats, batched } => {
            let model = model()?;
            let spec = BenchSpec {
                n_sequences: *n,
                length: *length,
                repeats: *repeats,
                seed: c.seed,
                execution: if *batched { Execution::Parallel } else { Execution::Sequential },
                ..BenchSpec::default()
            };
            let report = throughput_bench(&model, &spec)?;
            println!(
                "{} head: {:.0} letters/s ({:.4} s +/- {:.4} s per pass, {:.1}% rel. std) on {}",
                report.head,
                report.letters_per_second,
                report.mean_seconds,
                report.std_seconds,
                100.0 * report.relative_std(),
                report.hardware
            );
            write_json(&out.join("bench.json"), &report)?;
            manifest.output("bench.json");
        }
        Task::Key { text } => {
            let model = model()?;
            let tokens = encode(&text.to_uppercase())?;
            let key = recover_key(&model, &tokens)?;
            let summary = key.summary();
            println!("{}", decode(&key.decoded));
            println!("key: {}", summary.key);
            if !summary.unconstrained.is_empty() {
                println!("unconstrained cipher letters: {}", summary.unconstrained.iter().collect::<String>());
            }
            write_json(&out.join("key.json"), &summary)?;
            key.write_scores_csv(&out.join("key_scores.csv"))?;
            key.write_assignment_csv(&out.join("key_assignment.csv"))?;
            for f in ["key.json", "key_scores.csv", "key_assignment.csv"] {
                manifest.output(f);
            }
        }
    }
    manifest.write()?;
    Ok(())
}
