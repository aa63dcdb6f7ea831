//! Corpus cleaning, segment construction, splitting and batch assembly.

mod batch;
mod clean;
mod io;
mod segments;

pub use batch::{fresh_ciphers, make_batch, Batch};
pub use clean::{
    clean_corpus, clean_line, fold_accents, normalize_line, CleanOptions, DropReason, IngestReport, DEFAULT_MAX_LEN,
    DEFAULT_MIN_LEN,
};
pub use io::{read_raw_lines, read_records, write_records, RawLine};
pub use segments::{build_segments, DEFAULT_SEGMENTS_PER_LANGUAGE, DEFAULT_SEGMENT_LEN};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cipher::{encode, SymbolId};
use crate::error::Result;
use crate::rng::{stream_rng, streams};

/// Fraction of records assigned to the training split.
pub const DEFAULT_TRAIN_FRAC: f64 = 0.975;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A cleaned plaintext with metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub text: String,
    pub length: usize,
    #[serde(default, rename = "lang", skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl TextRecord {
    pub fn new(text: String, language: Option<String>) -> Self {
        Self {
            length: text.chars().count(),
            text,
            language,
            split: None,
        }
    }

    pub fn tokens(&self) -> Result<Vec<SymbolId>> {
        encode(&self.text)
    }
}

/// Deterministic shuffled split. Each side keeps the input order.
pub fn split(records: Vec<TextRecord>, train_frac: f64, seed: u64) -> (Vec<TextRecord>, Vec<TextRecord>) {
    let n = records.len();
    let n_train = ((n as f64) * train_frac).round().clamp(0.0, n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, streams::SPLIT));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (mut r, t) in records.into_iter().zip(is_train) {
        if t {
            r.split = Some(Split::Train);
            train.push(r);
        } else {
            r.split = Some(Split::Test);
            test.push(r);
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(n: usize) -> Vec<TextRecord> {
        (0..n).map(|i| TextRecord::new(format!("RECORD NUMBER {i}"), None)).collect()
    }

    #[test]
    fn split_sizes() {
        let (train, test) = split(records(1000), DEFAULT_TRAIN_FRAC, 1);
        assert_eq!((train.len(), test.len()), (975, 25));
        assert!(train.iter().all(|r| r.split == Some(Split::Train)));
        assert!(test.iter().all(|r| r.split == Some(Split::Test)));
    }

    #[test]
    fn split_deterministic() {
        let a = split(records(200), 0.9, 5);
        let b = split(records(200), 0.9, 5);
        let c = split(records(200), 0.9, 6);
        assert_eq!(a, b);
        assert_ne!(a.1, c.1);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..300, seed in any::<u64>(), frac in 0.0f64..=1.0) {
            let (train, test) = split(records(n), frac, seed);
            let mut all: Vec<String> = train.iter().chain(&test).map(|r| r.text.clone()).collect();
            all.sort();
            let mut orig: Vec<String> = records(n).into_iter().map(|r| r.text).collect();
            orig.sort();
            prop_assert_eq!(all, orig);
        }

        #[test]
        fn tokenize_detokenize_identity(text in "[A-Z .,'\"!?;:-]{0,100}") {
            let r = TextRecord::new(text.clone(), None);
            prop_assert_eq!(crate::cipher::decode(&r.tokens().unwrap()), text);
        }
    }
}
