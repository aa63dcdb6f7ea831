use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cipher::{is_letter, symbol_char, CipherMapping, SymbolId, N_LETTERS};
use crate::error::{Error, Result};
use crate::heads::PermutationMatrix;
use crate::model::{HeadKind, Model};
use crate::tensor::Real;

/// Key recovered from a single ciphertext by the bijective head.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredKey {
    /// Encryption key: plaintext letter to cipher letter.
    pub key: CipherMapping,
    /// Row = cipher letter, column = plaintext letter.
    pub assignment: PermutationMatrix,
    /// Head scores the assignment was solved on.
    pub scores: Array2<f64>,
    /// Cipher letters absent from the ciphertext; their rows are fixed only
    /// by the permutation constraint.
    pub unconstrained: Vec<SymbolId>,
    pub decoded: Vec<SymbolId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeySummary {
    pub key: String,
    /// `cipher -> plain` pairs, e.g. `"J->N"`.
    pub decryption: Vec<String>,
    pub unconstrained: Vec<char>,
}

impl RecoveredKey {
    pub fn summary(&self) -> KeySummary {
        let inv = self.key.invert();
        KeySummary {
            key: self.key.to_key_string(),
            decryption: (0..N_LETTERS as SymbolId)
                .map(|c| format!("{}->{}", letter(c), letter(inv.image(c))))
                .collect(),
            unconstrained: self.unconstrained.iter().map(|&c| letter(c)).collect(),
        }
    }

    /// Score matrix with row/column letter labels.
    pub fn write_scores_csv(&self, path: &Path) -> Result<()> {
        write_labelled(path, &self.scores)
    }

    /// The 0/1 assignment matrix with letter labels.
    pub fn write_assignment_csv(&self, path: &Path) -> Result<()> {
        write_labelled(path, &self.assignment.to_matrix())
    }
}

fn letter(id: SymbolId) -> char {
    symbol_char(id).expect("letter id")
}

fn write_labelled(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["cipher\\plain".to_owned()];
    header.extend((0..N_LETTERS as SymbolId).map(|c| letter(c).to_string()));
    w.write_record(&header)?;
    for (r, row) in m.rows().into_iter().enumerate() {
        let mut rec = vec![letter(r as SymbolId).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Solve for the full key behind `ciphertext` with a bijective model.
pub fn recover_key<F: Real>(model: &Model<F>, ciphertext: &[SymbolId]) -> Result<RecoveredKey> {
    if model.head_kind() != HeadKind::Bijective {
        return Err(Error::NotBijective);
    }
    let d = model.decode(ciphertext)?;
    let key = d.key().ok_or(Error::NotBijective)?;
    let mut present = [false; N_LETTERS];
    for &c in ciphertext.iter().filter(|&&c| is_letter(c)) {
        present[c as usize] = true;
    }
    let unconstrained = (0..N_LETTERS).filter(|&c| !present[c]).map(|c| c as SymbolId).collect();
    Ok(RecoveredKey {
        key,
        assignment: d.assignment.ok_or(Error::NotBijective)?,
        scores: d.scores.ok_or(Error::NotBijective)?,
        unconstrained,
        decoded: d.prediction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ModelConfig;
    use crate::cipher::encode;

    fn tiny() -> ModelConfig {
        let mut c = ModelConfig::new(8, 1, 2, 16);
        c.max_len = 128;
        c.init_std = 0.5;
        c
    }

    #[test]
    fn standard_head_is_rejected() {
        let m = Model::<f32>::new(&tiny(), HeadKind::Standard, 0).unwrap();
        assert!(matches!(recover_key(&m, &encode("ABC").unwrap()), Err(Error::NotBijective)));
    }

    #[test]
    fn key_is_total_and_reproduces_decoding() {
        let m = Model::<f32>::new(&tiny(), HeadKind::Bijective, 5).unwrap();
        let ct = encode("RJ HRIF, YF QDAF SEF BFVS KFTRVRNJV.").unwrap();
        let k = recover_key(&m, &ct).unwrap();
        assert_eq!(k.key.invert().apply(&ct).unwrap(), k.decoded);
        let mut cols = k.assignment.columns().to_vec();
        cols.sort_unstable();
        assert_eq!(cols, (0..N_LETTERS).collect::<Vec<_>>());
        let s = k.summary();
        assert_eq!(s.decryption.len(), 26);
        assert!(s.unconstrained.contains(&'G') && !s.unconstrained.contains(&'R'));
        let dir = tempfile::tempdir().unwrap();
        k.write_scores_csv(&dir.path().join("scores.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
        assert_eq!(text.lines().count(), 27);
    }
}
