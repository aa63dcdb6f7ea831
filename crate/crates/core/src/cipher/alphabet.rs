use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense symbol id. Letters occupy `0..26` (A..Z), passthrough symbols
/// `26..36`, and [`PAD`] is 36.
pub type SymbolId = u8;

pub const N_LETTERS: usize = 26;
/// Symbols that are copied through encryption unchanged.
pub const PASSTHROUGH: [char; 10] = [' ', '.', ',', '\'', '"', '!', '?', ';', ':', '-'];
/// Letters plus passthrough symbols: the output vocabulary of the decoders.
pub const N_SYMBOLS: usize = N_LETTERS + PASSTHROUGH.len();
pub const PAD: SymbolId = N_SYMBOLS as SymbolId;
/// Input vocabulary, including the padding id.
pub const VOCAB_SIZE: usize = N_SYMBOLS + 1;
pub const PAD_CHAR: char = '_';

/// The fixed symbol inventory shared by every experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    letters: Vec<char>,
    passthrough: Vec<char>,
    pad: char,
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::standard()
    }
}

impl Alphabet {
    pub fn standard() -> Self {
        Self {
            letters: ('A'..='Z').collect(),
            passthrough: PASSTHROUGH.to_vec(),
            pad: PAD_CHAR,
        }
    }

    pub fn letters(&self) -> &[char] {
        &self.letters
    }

    pub fn passthrough(&self) -> &[char] {
        &self.passthrough
    }

    pub fn pad(&self) -> char {
        self.pad
    }

    /// Id of a non-pad symbol. The pad character is not tokenizable.
    pub fn id(&self, c: char) -> Option<SymbolId> {
        symbol_id(c)
    }

    pub fn char_of(&self, id: SymbolId) -> Option<char> {
        symbol_char(id)
    }
}

pub fn symbol_id(c: char) -> Option<SymbolId> {
    if c.is_ascii_uppercase() {
        return Some(c as u8 - b'A');
    }
    PASSTHROUGH
        .iter()
        .position(|&p| p == c)
        .map(|i| (N_LETTERS + i) as SymbolId)
}

pub fn symbol_char(id: SymbolId) -> Option<char> {
    let i = id as usize;
    if i < N_LETTERS {
        Some((b'A' + id) as char)
    } else if i < N_SYMBOLS {
        Some(PASSTHROUGH[i - N_LETTERS])
    } else if id == PAD {
        Some(PAD_CHAR)
    } else {
        None
    }
}

#[inline]
pub fn is_letter(id: SymbolId) -> bool {
    (id as usize) < N_LETTERS
}

#[inline]
pub fn is_passthrough(id: SymbolId) -> bool {
    (N_LETTERS..N_SYMBOLS).contains(&(id as usize))
}

/// Tokenize text. Only uppercase letters and passthrough symbols are accepted.
pub fn encode(text: &str) -> Result<Vec<SymbolId>> {
    text.chars()
        .map(|c| symbol_id(c).ok_or(Error::UnknownChar(c)))
        .collect()
}

/// Detokenize. Pad ids render as [`PAD_CHAR`].
pub fn decode(ids: &[SymbolId]) -> String {
    ids.iter().map(|&id| symbol_char(id).unwrap_or('\u{fffd}')).collect()
}

/// Role of a sequence in the encrypt/decrypt pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Plaintext,
    Ciphertext,
    Prediction,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Plaintext => "plaintext",
            Role::Ciphertext => "ciphertext",
            Role::Prediction => "prediction",
        }
    }
}

/// An unpadded sequence of symbol ids with its role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSequence {
    symbols: Vec<SymbolId>,
    role: Role,
}

impl CharSequence {
    pub fn new(symbols: Vec<SymbolId>, role: Role) -> Result<Self> {
        for (i, &id) in symbols.iter().enumerate() {
            if id == PAD {
                return Err(Error::UnexpectedPad(i));
            }
            if id as usize >= N_SYMBOLS {
                return Err(Error::InvalidId(id as u32));
            }
        }
        Ok(Self { symbols, role })
    }

    pub fn parse(text: &str, role: Role) -> Result<Self> {
        Ok(Self {
            symbols: encode(text)?,
            role,
        })
    }

    pub fn symbols(&self) -> &[SymbolId] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<SymbolId> {
        self.symbols
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn with_role(self, role: Role) -> Self {
        Self { role, ..self }
    }
}

impl fmt::Display for CharSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&decode(&self.symbols))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_disjoint() {
        let alphabet = Alphabet::standard();
        assert_eq!(alphabet.letters().len(), 26);
        let mut seen = [false; VOCAB_SIZE];
        for &c in alphabet.letters().iter().chain(alphabet.passthrough()) {
            let id = alphabet.id(c).unwrap();
            assert!(!seen[id as usize]);
            seen[id as usize] = true;
            assert_eq!(alphabet.char_of(id), Some(c));
        }
        assert!(!seen[PAD as usize]);
        assert!(seen[..N_SYMBOLS].iter().all(|&s| s));
        assert_eq!(alphabet.id(alphabet.pad()), None);
        assert!(!alphabet.letters().contains(&alphabet.pad()));
        assert!(!alphabet.passthrough().contains(&alphabet.pad()));
    }

    #[test]
    fn tokenize_rejects_lowercase_and_unknown() {
        assert!(matches!(encode("abc"), Err(Error::UnknownChar('a'))));
        assert!(matches!(encode("CAFÉ"), Err(Error::UnknownChar('É'))));
        assert!(matches!(encode("A_B"), Err(Error::UnknownChar('_'))));
    }

    #[test]
    fn sequence_rejects_pad_and_bad_ids() {
        assert!(matches!(CharSequence::new(vec![0, PAD], Role::Plaintext), Err(Error::UnexpectedPad(1))));
        assert!(matches!(CharSequence::new(vec![99], Role::Plaintext), Err(Error::InvalidId(99))));
    }

    #[test]
    fn display_round_trips() {
        let text = "HELLO, WORLD! IT'S \"FINE\"; OK: A-B?";
        let seq = CharSequence::parse(text, Role::Plaintext).unwrap();
        assert_eq!(seq.to_string(), text);
    }
}
