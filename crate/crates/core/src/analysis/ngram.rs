use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cipher::SymbolId;
use crate::error::Result;

pub type NgramCounts<'a> = BTreeMap<&'a [SymbolId], u64>;

/// Counts of all length-`n` windows, each record counted on its own.
pub fn ngram_counts<'a, T: AsRef<[SymbolId]>>(records: &'a [T], n: usize) -> NgramCounts<'a> {
    let mut counts = BTreeMap::new();
    if n == 0 {
        return counts;
    }
    for r in records {
        for w in r.as_ref().windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Cosine similarity of two count vectors.
pub fn count_cosine(a: &NgramCounts<'_>, b: &NgramCounts<'_>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, &x)| b.get(k).map(|&y| x as f64 * y as f64)).sum();
    let sq = |c: &NgramCounts<'_>| c.values().map(|&x| (x as f64).powi(2)).sum::<f64>();
    // One square root of the product keeps identical inputs at exactly 1.
    let denom = (sq(a) * sq(b)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        // Rounding can push parallel vectors a hair above 1.
        (dot / denom).min(1.0)
    }
}

/// Cosine similarity between the length-`n` substring counts of two texts.
/// Spaces and punctuation are ordinary symbols. A text shorter than `n` has
/// no n-grams; the similarity is then 0 and a warning is logged.
pub fn ngram_cosine(a: &[SymbolId], b: &[SymbolId], n: usize) -> f64 {
    if n == 0 || a.len() < n || b.len() < n {
        log::warn!("n-gram cosine with n = {n} on texts of length {} and {}; defined as 0", a.len(), b.len());
        return 0.0;
    }
    count_cosine(&ngram_counts(&[a], n), &ngram_counts(&[b], n))
}

/// Corpus-level similarity of predictions to references, per layer and n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub layers: Vec<usize>,
    pub ns: Vec<usize>,
    /// `values[i][j]`: layer `layers[i]`, n-gram length `ns[j]`.
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    /// First differences across consecutive layers; the first row is
    /// relative to zero.
    pub fn deltas(&self) -> Vec<Vec<f64>> {
        let mut prev = vec![0.0; self.ns.len()];
        self.values
            .iter()
            .map(|row| {
                let d = row.iter().zip(&prev).map(|(a, b)| a - b).collect();
                prev.clone_from(row);
                d
            })
            .collect()
    }

    /// Wide CSV: `layer,n1,...` for both the values and the deltas.
    pub fn write_csv(&self, path: &Path, deltas: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["layer".to_owned()];
        header.extend(self.ns.iter().map(|n| format!("n{n}")));
        w.write_record(&header)?;
        let rows = if deltas { self.deltas() } else { self.values.clone() };
        for (layer, row) in self.layers.iter().zip(rows) {
            let mut rec = vec![layer.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long CSV: `layer,n,similarity,delta`.
    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["layer", "n", "similarity", "delta"])?;
        for ((layer, row), drow) in self.layers.iter().zip(&self.values).zip(self.deltas()) {
            for ((n, v), d) in self.ns.iter().zip(row).zip(drow) {
                w.write_record([layer.to_string(), n.to_string(), v.to_string(), d.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Compare each layer's decoded corpus against `truth` for n in `ns`.
pub fn similarity_matrix(
    layer_predictions: &[(usize, Vec<Vec<SymbolId>>)],
    truth: &[Vec<SymbolId>],
    ns: &[usize],
) -> SimilarityMatrix {
    let truth_counts: Vec<NgramCounts<'_>> = ns.iter().map(|&n| ngram_counts(truth, n)).collect();
    let values = layer_predictions
        .iter()
        .map(|(_, preds)| {
            ns.iter().zip(&truth_counts).map(|(&n, tc)| count_cosine(&ngram_counts(preds, n), tc)).collect()
        })
        .collect();
    SimilarityMatrix { layers: layer_predictions.iter().map(|(l, _)| *l).collect(), ns: ns.to_vec(), values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::encode;
    use proptest::prelude::*;

    fn e(s: &str) -> Vec<SymbolId> {
        encode(s).unwrap()
    }

    #[test]
    fn hand_tabulated_bigrams() {
        // ABAB: AB 2, BA 1. ABBA: AB 1, BB 1, BA 1.
        let expected = (2.0 * 1.0 + 1.0 * 1.0) / (5.0f64.sqrt() * 3.0f64.sqrt());
        assert!((ngram_cosine(&e("ABAB"), &e("ABBA"), 2) - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(ngram_cosine(&e("HELLO, WORLD"), &e("HELLO, WORLD"), 3), 1.0);
        assert_eq!(ngram_cosine(&e("ABC"), &e("XYZ"), 1), 0.0);
        assert_eq!(ngram_cosine(&e("AB"), &e("ABC"), 3), 0.0);
    }

    #[test]
    fn records_are_not_joined() {
        let recs = vec![e("AB"), e("CD")];
        let c = ngram_counts(&recs, 2);
        assert_eq!(c.len(), 2);
        assert!(!c.contains_key(&e("BC")[..]));
    }

    #[test]
    fn deltas_are_first_differences() {
        let m = SimilarityMatrix { layers: vec![1, 2], ns: vec![1, 2], values: vec![vec![0.5, 0.25], vec![0.75, 0.5]] };
        assert_eq!(m.deltas(), vec![vec![0.5, 0.25], vec![0.25, 0.25]]);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(0u8..6, 1..30), b in prop::collection::vec(0u8..6, 1..30), n in 1usize..4) {
            let x = ngram_cosine(&a, &b, n);
            let y = ngram_cosine(&b, &a, n);
            prop_assert_eq!(x, y);
            prop_assert!((0.0..=1.0).contains(&x));
        }

        #[test]
        fn repeated_text_is_parallel(a in prop::collection::vec(0u8..4, 1..20), k in 2usize..4) {
            // Concatenating k copies as separate records scales every count by k.
            let copies: Vec<Vec<SymbolId>> = vec![a.clone(); k];
            let s = count_cosine(&ngram_counts(std::slice::from_ref(&a), 1), &ngram_counts(&copies, 1));
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
