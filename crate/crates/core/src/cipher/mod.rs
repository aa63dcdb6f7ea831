//! Alphabet, substitution ciphers and the symbol error rate.

mod alphabet;
mod mapping;

pub use alphabet::{
    decode, encode, is_letter, is_passthrough, symbol_char, symbol_id, Alphabet, CharSequence, Role, SymbolId,
    N_LETTERS, N_SYMBOLS, PAD, PAD_CHAR, PASSTHROUGH, VOCAB_SIZE,
};
pub use mapping::{encrypt, invert, sample_cipher, CipherMapping};

use crate::error::{Error, Result};

/// Fraction of positions where `pred` and `truth` differ. Letters, spaces and
/// punctuation all count. Empty sequences have no errors.
pub fn symbol_error_rate(pred: &[SymbolId], truth: &[SymbolId]) -> Result<f64> {
    Ok(symbol_errors(pred, truth)? as f64 / pred.len().max(1) as f64)
}

/// Number of mismatched positions.
pub fn symbol_errors(pred: &[SymbolId], truth: &[SymbolId]) -> Result<usize> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a != b).count())
}
