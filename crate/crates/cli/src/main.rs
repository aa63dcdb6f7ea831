mod analyze;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cryptogram::HeadKind;

/// Exit status for bad command-line usage (clap uses the same code).
const EXIT_USAGE: u8 = 2;
/// Exit status for invalid configuration.
const EXIT_CONFIG: u8 = 3;
const EXIT_RUNTIME: u8 = 1;

/// Decipher monoalphabetic substitution ciphers with a transformer.
#[derive(Debug, Parser)]
#[command(name = "cryptogram", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean raw text into a record corpus and split it into train/test.
    Ingest(commands::IngestArgs),
    /// Train a model from a config file.
    Train(commands::TrainArgs),
    /// Train one model per cipher pool size and compare validation accuracy.
    Generalize(commands::GeneralizeArgs),
    /// Decode ciphertext with a trained checkpoint.
    Decrypt(commands::DecryptArgs),
    /// Evaluation and interpretability reports for a checkpoint.
    Analyze(analyze::AnalyzeArgs),
}

/// A usage problem detected after argument parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<cryptogram::Error>() {
        Some(e) if e.is_config() => EXIT_CONFIG,
        Some(cryptogram::Error::EmptyInput) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Shared `--head` parser.
pub fn parse_head(s: &str) -> Result<HeadKind, String> {
    s.parse().map_err(|e: cryptogram::Error| e.to_string())
}

pub fn default_out_dir(name: &str) -> PathBuf {
    PathBuf::from("runs").join(name)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a, &argv),
        Command::Train(a) => commands::train(a, &argv),
        Command::Generalize(a) => commands::generalize(a, &argv),
        Command::Decrypt(a) => commands::decrypt(a),
        Command::Analyze(a) => analyze::run(a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
