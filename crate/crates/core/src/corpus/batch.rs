use ndarray::Array2;

use crate::cipher::{CipherMapping, SymbolId, PAD};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// A padded batch of encrypted sequences.
///
/// `pad_mask[[r, i]]` is true at padding positions, which hold [`PAD`] in
/// both `tokens` and `targets`. Padding is always a contiguous suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub tokens: Array2<SymbolId>,
    pub pad_mask: Array2<bool>,
    pub targets: Array2<SymbolId>,
    pub ciphers: Vec<CipherMapping>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.lengths.len()
    }

    /// Unpadded ciphertext of row `r`.
    pub fn row_tokens(&self, r: usize) -> &[SymbolId] {
        let row = self.tokens.row(r).to_slice().expect("batch rows are contiguous");
        &row[..self.lengths[r]]
    }

    /// Unpadded plaintext of row `r`.
    pub fn row_targets(&self, r: usize) -> &[SymbolId] {
        let row = self.targets.row(r).to_slice().expect("batch rows are contiguous");
        &row[..self.lengths[r]]
    }

    /// Number of non-pad positions.
    pub fn n_positions(&self) -> usize {
        self.lengths.iter().sum()
    }
}

/// Encrypt each plaintext under its own cipher and pad to the longest row.
pub fn make_batch<P: AsRef<[SymbolId]>>(plaintexts: &[P], ciphers: &[CipherMapping], max_len: usize) -> Result<Batch> {
    if plaintexts.len() != ciphers.len() {
        return Err(Error::LengthMismatch(plaintexts.len(), ciphers.len()));
    }
    let lengths: Vec<usize> = plaintexts.iter().map(|p| p.as_ref().len()).collect();
    if let Some(&len) = lengths.iter().find(|&&l| l > max_len) {
        return Err(Error::TooLong { len, max: max_len });
    }
    let width = lengths.iter().copied().max().unwrap_or(0);
    let rows = plaintexts.len();
    let mut tokens = Array2::from_elem((rows, width), PAD);
    let mut targets = Array2::from_elem((rows, width), PAD);
    let mut pad_mask = Array2::from_elem((rows, width), true);
    for (r, (plain, cipher)) in plaintexts.iter().zip(ciphers).enumerate() {
        let plain = plain.as_ref();
        let enc = cipher.apply(plain)?;
        for (i, (&p, &c)) in plain.iter().zip(&enc).enumerate() {
            targets[[r, i]] = p;
            tokens[[r, i]] = c;
            pad_mask[[r, i]] = false;
        }
    }
    Ok(Batch {
        tokens,
        pad_mask,
        targets,
        ciphers: ciphers.to_vec(),
        lengths,
    })
}

/// `n` independent ciphers drawn from items `start..start+n` of a seed stream.
pub fn fresh_ciphers(stream: &SeedStream, start: u64, n: usize) -> Vec<CipherMapping> {
    (0..n as u64).map(|i| CipherMapping::sample(stream.seed(start + i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::encode;

    #[test]
    fn identical_plaintexts_get_independent_ciphers() {
        let text = encode("THE QUICK BROWN FOX JUMPS OVER THE LAZY DOG.").unwrap();
        let plains = vec![text.clone(); 8];
        let ciphers = fresh_ciphers(&SeedStream::new(3), 0, 8);
        let batch = make_batch(&plains, &ciphers, 304).unwrap();
        for a in 0..8 {
            for b in a + 1..8 {
                if ciphers[a] != ciphers[b] {
                    assert_ne!(batch.row_tokens(a), batch.row_tokens(b));
                }
            }
            let decrypted = ciphers[a].invert().apply(batch.row_tokens(a)).unwrap();
            assert_eq!(decrypted, batch.row_targets(a));
            assert_eq!(batch.row_targets(a), &text[..]);
        }
    }

    #[test]
    fn padding_is_a_masked_suffix() {
        let plains = vec![encode("AB CD").unwrap(), encode("EFGHIJK").unwrap()];
        let ciphers = fresh_ciphers(&SeedStream::new(1), 0, 2);
        let b = make_batch(&plains, &ciphers, 304).unwrap();
        assert_eq!(b.tokens.dim(), (2, 7));
        for i in 5..7 {
            assert_eq!(b.tokens[[0, i]], PAD);
            assert_eq!(b.targets[[0, i]], PAD);
            assert!(b.pad_mask[[0, i]]);
        }
        assert!(b.pad_mask.row(1).iter().all(|&m| !m));
        assert_eq!(b.n_positions(), 12);
    }

    #[test]
    fn too_long_is_rejected() {
        let plains = vec![vec![0u8; 10]];
        let r = make_batch(&plains, &[CipherMapping::identity()], 9);
        assert!(matches!(r, Err(Error::TooLong { len: 10, max: 9 })));
    }
}
