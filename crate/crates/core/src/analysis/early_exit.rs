use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::eval_cipher;
use crate::cipher::{decode, symbol_errors, SymbolId};
use crate::error::Result;
use crate::exec::Execution;
use crate::model::Model;
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDecoding {
    pub layer: usize,
    pub text: String,
    /// Positions that differ from the previous layer's decoding.
    pub changed: Vec<bool>,
    /// 26-letter key string, bijective head only.
    pub key: Option<String>,
}

/// Per-layer decodings of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyExitTable {
    pub ciphertext: String,
    pub rows: Vec<LayerDecoding>,
}

impl EarlyExitTable {
    /// Plain-text table; a line of `^` under each row marks the positions
    /// that changed relative to the layer above.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.layer).max().unwrap_or(0).to_string().len().max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:>width$}  {}", "input", self.ciphertext);
        for r in &self.rows {
            let _ = writeln!(out, "{:>width$}  {}", r.layer, r.text);
            if r.changed.iter().any(|&c| c) {
                let marks: String = r.changed.iter().map(|&c| if c { '^' } else { ' ' }).collect();
                let _ = writeln!(out, "{:>width$}  {}", "", marks.trim_end());
            }
        }
        out
    }
}

/// Decode `tokens` from every layer's output.
pub fn early_exit_table<F: Real>(model: &Model<F>, tokens: &[SymbolId]) -> Result<EarlyExitTable> {
    let layers: Vec<usize> = (1..=model.config().n_layers).collect();
    let decodings = model.early_exit_all(tokens, &layers)?;
    let mut rows = Vec::with_capacity(layers.len());
    let mut prev: Option<&[SymbolId]> = None;
    for (&layer, d) in layers.iter().zip(&decodings) {
        let changed = match prev {
            Some(p) => p.iter().zip(&d.prediction).map(|(a, b)| a != b).collect(),
            None => vec![false; tokens.len()],
        };
        rows.push(LayerDecoding {
            layer,
            text: decode(&d.prediction),
            changed,
            key: d.key().map(|k| k.to_key_string()),
        });
        prev = Some(&d.prediction);
    }
    Ok(EarlyExitTable { ciphertext: decode(tokens), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSer {
    pub layer: usize,
    pub mean_ser: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyExitCurve {
    pub layers: Vec<LayerSer>,
    /// Whether mean SER never increases with depth. Reported, not enforced.
    pub monotone: bool,
}

/// Mean SER per exit layer over `plaintexts`, each under its evaluation cipher.
pub fn early_exit_curve<F: Real>(
    model: &Model<F>,
    plaintexts: &[Vec<SymbolId>],
    cipher_seed: u64,
    exec: Execution,
) -> Result<EarlyExitCurve> {
    let n = model.config().n_layers;
    let layers: Vec<usize> = (1..=n).collect();
    let per_seq = exec.map_range(plaintexts.len(), |i| -> Result<Vec<f64>> {
        let plain = &plaintexts[i];
        let decodings = model.early_exit_all(&eval_cipher(cipher_seed, i).apply(plain)?, &layers)?;
        decodings.iter().map(|d| Ok(symbol_errors(&d.prediction, plain)? as f64 / plain.len() as f64)).collect()
    });
    let mut sums = vec![0.0; n];
    for r in per_seq {
        for (s, v) in sums.iter_mut().zip(r?) {
            *s += v;
        }
    }
    let count = plaintexts.len().max(1) as f64;
    let layers: Vec<LayerSer> =
        sums.iter().enumerate().map(|(i, s)| LayerSer { layer: i + 1, mean_ser: s / count }).collect();
    let monotone = layers.windows(2).all(|w| w[1].mean_ser <= w[0].mean_ser);
    Ok(EarlyExitCurve { layers, monotone })
}

pub fn write_curve_csv(curve: &EarlyExitCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &curve.layers {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ModelConfig;
    use crate::cipher::encode;
    use crate::model::HeadKind;

    fn model(head: HeadKind) -> Model<f64> {
        let mut c = ModelConfig::new(16, 3, 2, 32);
        c.max_len = 64;
        c.init_std = 0.5;
        Model::new(&c, head, 12).unwrap()
    }

    #[test]
    fn table_has_one_row_per_layer_and_marks_changes() {
        for head in [HeadKind::Standard, HeadKind::Bijective] {
            let m = model(head);
            let tokens = encode("XLI UYMGO FVSAR JSB.").unwrap();
            let t = early_exit_table(&m, &tokens).unwrap();
            assert_eq!(t.rows.len(), 3);
            assert!(t.rows[0].changed.iter().all(|&c| !c));
            for w in t.rows.windows(2) {
                let diff: Vec<bool> = w[0].text.chars().zip(w[1].text.chars()).map(|(a, b)| a != b).collect();
                assert_eq!(diff, w[1].changed);
            }
            assert_eq!(t.rows[2].text, decode(&m.decode(&tokens).unwrap().prediction));
            assert_eq!(t.rows[0].key.is_some(), head == HeadKind::Bijective);
            assert!(t.render().lines().count() >= 4);
        }
    }

    #[test]
    fn curve_last_point_matches_full_decoding() {
        let m = model(HeadKind::Standard);
        let texts = vec![encode("HELLO THERE, GENERAL.").unwrap(), encode("A SHORT LINE").unwrap()];
        let curve = early_exit_curve(&m, &texts, 5, Execution::Sequential).unwrap();
        let full = super::super::eval::evaluate(&m, &texts, 5, Execution::Sequential).unwrap();
        assert_eq!(curve.layers.last().unwrap().mean_ser, full.overall.mean_ser.unwrap());
    }
}
