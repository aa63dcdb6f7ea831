use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cipher::{SymbolId, N_LETTERS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::Model;
use crate::rng::{stream_rng, streams};
use crate::tensor::Real;
use crate::training::mean_std;

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub n_sequences: usize,
    pub length: usize,
    pub repeats: usize,
    /// Untimed passes before measuring.
    pub warmup: usize,
    pub seed: u64,
    /// `Sequential` is the single-stream protocol; `Parallel` decodes the
    /// sequences concurrently.
    pub execution: Execution,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { n_sequences: 1000, length: 300, repeats: 50, warmup: 1, seed: 0, execution: Execution::Sequential }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec: BenchSpec,
    pub head: String,
    pub seconds: Vec<f64>,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub letters_per_second: f64,
    pub hardware: String,
}

impl BenchReport {
    pub fn relative_std(&self) -> f64 {
        self.std_seconds / self.mean_seconds
    }
}

/// Short description of the machine the numbers came from.
pub fn hardware_string() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|s| s.trim().to_owned()))
        .unwrap_or_else(|| "unknown cpu".to_owned());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {threads} threads; {} {}", std::env::consts::OS, std::env::consts::ARCH)
}

/// Random letter-only ciphertexts of the given shape.
pub fn bench_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<SymbolId>> {
    let mut rng = stream_rng(seed, streams::EVAL);
    (0..n).map(|_| (0..len).map(|_| rng.random_range(0..N_LETTERS as SymbolId)).collect()).collect()
}

/// Time decoding of `n_sequences × length` letters, `repeats` times.
pub fn throughput_bench<F: Real>(model: &Model<F>, spec: &BenchSpec) -> Result<BenchReport> {
    if spec.n_sequences == 0 || spec.length == 0 || spec.repeats == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one sequence, letter and repeat".into()));
    }
    let inputs = bench_inputs(spec.n_sequences, spec.length, spec.seed);
    let run = || -> Result<f64> {
        let start = Instant::now();
        let out = model.decode_batch(&inputs, spec.execution)?;
        std::hint::black_box(&out);
        Ok(start.elapsed().as_secs_f64())
    };
    for _ in 0..spec.warmup {
        run()?;
    }
    let seconds = (0..spec.repeats).map(|_| run()).collect::<Result<Vec<_>>>()?;
    let (mean_seconds, std_seconds) = mean_std(&seconds);
    Ok(BenchReport {
        spec: spec.clone(),
        head: model.head_kind().to_string(),
        letters_per_second: (spec.n_sequences * spec.length) as f64 / mean_seconds,
        seconds,
        mean_seconds,
        std_seconds,
        hardware: hardware_string(),
    })
}
