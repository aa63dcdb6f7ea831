use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::letters::LetterFrequencies;
use crate::cipher::{is_letter, symbol_errors, CipherMapping, SymbolId, N_LETTERS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::Model;
use crate::rng::{derive_seed, stream_rng, streams, SeedStream};
use crate::tensor::Real;
use crate::training::{bootstrap_ser, BootstrapEstimate, DEFAULT_BOOTSTRAP_SAMPLES};

/// Anything that maps ciphertext to a plaintext guess of the same length.
pub trait Decoder: Sync {
    fn decode(&self, ciphertext: &[SymbolId]) -> Result<Vec<SymbolId>>;
}

impl<F: Real> Decoder for Model<F> {
    fn decode(&self, ciphertext: &[SymbolId]) -> Result<Vec<SymbolId>> {
        Model::decode(self, ciphertext).map(|d| d.prediction)
    }
}

/// Classical baseline: within each sequence, the k-th most frequent cipher
/// letter is read as the k-th most frequent English letter. Ties go to the
/// lower letter id; letters absent from the sequence are paired off in the
/// same order.
#[derive(Debug, Clone)]
pub struct FrequencyRankDecoder {
    english_ranking: [SymbolId; N_LETTERS],
}

impl FrequencyRankDecoder {
    pub fn new(freqs: &LetterFrequencies) -> Self {
        Self { english_ranking: freqs.ranking() }
    }

    pub fn english() -> Self {
        Self::new(&LetterFrequencies::english())
    }

    /// Cipher letters of `ciphertext` by descending count.
    pub fn cipher_ranking(ciphertext: &[SymbolId]) -> [SymbolId; N_LETTERS] {
        let mut counts = [0usize; N_LETTERS];
        for &c in ciphertext.iter().filter(|&&c| is_letter(c)) {
            counts[c as usize] += 1;
        }
        let mut order: [SymbolId; N_LETTERS] = std::array::from_fn(|i| i as SymbolId);
        order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        order
    }
}

impl Decoder for FrequencyRankDecoder {
    fn decode(&self, ciphertext: &[SymbolId]) -> Result<Vec<SymbolId>> {
        let ranking = Self::cipher_ranking(ciphertext);
        let mut map = [0 as SymbolId; N_LETTERS];
        for (&cipher, &plain) in ranking.iter().zip(&self.english_ranking) {
            map[cipher as usize] = plain;
        }
        Ok(ciphertext.iter().map(|&c| if is_letter(c) { map[c as usize] } else { c }).collect())
    }
}

/// Lower-inclusive length bin edges.
pub const BIN_EDGES: [usize; 4] = [32, 64, 128, 256];
/// Sequences at least this long count as "long" in the aggregates.
pub const LONG_THRESHOLD: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub index: usize,
    pub length: usize,
    pub errors: usize,
    pub ser: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub label: String,
    pub min_len: usize,
    /// Exclusive upper bound; `None` is unbounded.
    pub max_len: Option<usize>,
    pub count: usize,
    pub median_ser: Option<f64>,
    pub p16_ser: Option<f64>,
    pub p84_ser: Option<f64>,
    /// Number of sequences by number of errors.
    pub error_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub count: usize,
    pub mean_ser: Option<f64>,
    pub median_ser: Option<f64>,
    pub bootstrap: Option<BootstrapEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cipher_seed: u64,
    pub bins: Vec<LengthBin>,
    pub short: Aggregate,
    pub long: Aggregate,
    pub overall: Aggregate,
    pub sequences: Vec<SequenceResult>,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

fn sorted(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Cipher used for evaluation record `index`.
pub fn eval_cipher(cipher_seed: u64, index: usize) -> CipherMapping {
    CipherMapping::sample(SeedStream::new(cipher_seed).child(streams::EVAL).seed(index as u64))
}

/// Score per-sequence results into the binned report.
pub fn summarize(sequences: Vec<SequenceResult>, cipher_seed: u64) -> EvalReport {
    let mut edges = vec![0];
    edges.extend(BIN_EDGES);
    let mut bins = Vec::new();
    for (i, &lo) in edges.iter().enumerate() {
        let hi = edges.get(i + 1).copied();
        let members: Vec<&SequenceResult> =
            sequences.iter().filter(|s| s.length >= lo && hi.is_none_or(|h| s.length < h)).collect();
        let sers = sorted(members.iter().map(|s| s.ser));
        let mut error_histogram = BTreeMap::new();
        for s in &members {
            *error_histogram.entry(s.errors).or_insert(0) += 1;
        }
        bins.push(LengthBin {
            label: match hi {
                Some(h) if lo == 0 => format!("<{h}"),
                Some(h) => format!("{lo}-{h}"),
                None => format!(">={lo}"),
            },
            min_len: lo,
            max_len: hi,
            count: members.len(),
            median_ser: percentile(&sers, 50.0),
            p16_ser: percentile(&sers, 16.0),
            p84_ser: percentile(&sers, 84.0),
            error_histogram,
        });
    }
    let aggregate = |label: &str, filter: &dyn Fn(&SequenceResult) -> bool, stream: u64| {
        let sers: Vec<f64> = sequences.iter().filter(|s| filter(s)).map(|s| s.ser).collect();
        let mut rng = stream_rng(derive_seed(cipher_seed, stream), streams::BOOTSTRAP);
        let sorted_sers = sorted(sers.iter().copied());
        Aggregate {
            label: label.to_owned(),
            count: sers.len(),
            mean_ser: (!sers.is_empty()).then(|| sers.iter().sum::<f64>() / sers.len() as f64),
            median_ser: percentile(&sorted_sers, 50.0),
            bootstrap: bootstrap_ser(&sers, DEFAULT_BOOTSTRAP_SAMPLES, &mut rng),
        }
    };
    let short = aggregate(&format!("<{LONG_THRESHOLD}"), &|s| s.length < LONG_THRESHOLD, 0);
    let long = aggregate(&format!(">={LONG_THRESHOLD}"), &|s| s.length >= LONG_THRESHOLD, 1);
    let overall = aggregate("all", &|_| true, 2);
    EvalReport { cipher_seed, bins, short, long, overall, sequences }
}

/// Encrypt each plaintext under its own fresh cipher, decode, and report
/// symbol error rates (spaces and punctuation included).
pub fn evaluate<D: Decoder + ?Sized>(
    decoder: &D,
    plaintexts: &[Vec<SymbolId>],
    cipher_seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    if plaintexts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let results = exec.map_range(plaintexts.len(), |i| -> Result<SequenceResult> {
        let plain = &plaintexts[i];
        let cipher = eval_cipher(cipher_seed, i);
        let decoded = decoder.decode(&cipher.apply(plain)?)?;
        let errors = symbol_errors(&decoded, plain)?;
        Ok(SequenceResult { index: i, length: plain.len(), errors, ser: errors as f64 / plain.len().max(1) as f64 })
    });
    let sequences = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(sequences, cipher_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::encode;

    struct Perfect<'a>(&'a [Vec<SymbolId>], u64);

    impl Decoder for Perfect<'_> {
        fn decode(&self, ciphertext: &[SymbolId]) -> Result<Vec<SymbolId>> {
            // Look the plaintext up by re-encrypting candidates.
            for (i, p) in self.0.iter().enumerate() {
                if eval_cipher(self.1, i).apply(p)? == ciphertext {
                    return Ok(p.clone());
                }
            }
            unreachable!()
        }
    }

    struct Echo;

    impl Decoder for Echo {
        fn decode(&self, ciphertext: &[SymbolId]) -> Result<Vec<SymbolId>> {
            Ok(ciphertext.to_vec())
        }
    }

    fn texts() -> Vec<Vec<SymbolId>> {
        let mut out: Vec<Vec<SymbolId>> =
            ["SHORT ONE.", "A SOMEWHAT LONGER SENTENCE THAN THE FIRST ONE, WITH COMMAS."].iter().map(|s| encode(s).unwrap()).collect();
        out.push(encode(&"LONG TEXT ".repeat(14)).unwrap());
        out.push(encode(&"X".repeat(300)).unwrap());
        out
    }

    #[test]
    fn perfect_decoder_scores_zero() {
        let t = texts();
        let r = evaluate(&Perfect(&t, 7), &t, 7, Execution::Sequential).unwrap();
        assert!(r.bins.iter().filter(|b| b.count > 0).all(|b| b.median_ser == Some(0.0)));
        assert_eq!(r.overall.mean_ser, Some(0.0));
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), t.len());
        assert_eq!((r.short.count, r.long.count), (2, 2));
    }

    #[test]
    fn echo_decoder_counts_moved_letters() {
        let t = texts();
        let r = evaluate(&Echo, &t, 11, Execution::Parallel).unwrap();
        for s in &r.sequences {
            let cipher = eval_cipher(11, s.index);
            let plain = &t[s.index];
            let moved = plain.iter().filter(|&&p| is_letter(p) && cipher.image(p) != p).count();
            assert_eq!(s.errors, moved);
        }
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 50.0), Some(2.5));
        assert_eq!(percentile(&xs, 0.0), Some(1.0));
        assert_eq!(percentile(&xs, 100.0), Some(4.0));
        assert!((percentile(&xs, 16.0).unwrap() - 1.48).abs() < 1e-12);
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn frequency_rank_decodes_english_like_text() {
        let plain = encode("EEEEEEEEEEEE TTTTTTTTT AAAAAAAA OOOOOOO").unwrap();
        let cipher = CipherMapping::sample(5);
        let decoded = FrequencyRankDecoder::english().decode(&cipher.apply(&plain).unwrap()).unwrap();
        assert_eq!(decoded, plain);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let t = texts();
        let a = evaluate(&FrequencyRankDecoder::english(), &t, 3, Execution::Parallel).unwrap();
        let b = evaluate(&FrequencyRankDecoder::english(), &t, 3, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }
}
