use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::alphabet::{is_letter, CharSequence, Role, SymbolId, N_LETTERS, PAD};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

/// A monoalphabetic substitution: a bijection on the 26 letters.
///
/// `perm[i]` is the image of letter `i`. Serialized as the 26-character
/// string of images of `A..Z`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CipherMapping {
    perm: [SymbolId; N_LETTERS],
}

impl CipherMapping {
    pub fn identity() -> Self {
        let mut perm = [0; N_LETTERS];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i as SymbolId;
        }
        Self { perm }
    }

    pub fn from_perm(perm: [SymbolId; N_LETTERS]) -> Result<Self> {
        let mut seen = [false; N_LETTERS];
        for &p in &perm {
            let p = p as usize;
            if p >= N_LETTERS || seen[p] {
                return Err(Error::InvalidKey(format!("{perm:?} is not a permutation of 0..26")));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    /// Uniform draw over all 26! permutations (Fisher-Yates), deterministic in `seed`.
    pub fn sample(seed: u64) -> Self {
        let mut rng = stream_rng(seed, streams::CIPHER);
        Self::sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut m = Self::identity();
        for i in (1..N_LETTERS).rev() {
            let j = rng.random_range(0..=i);
            m.perm.swap(i, j);
        }
        m
    }

    pub fn perm(&self) -> &[SymbolId; N_LETTERS] {
        &self.perm
    }

    /// Image of a letter id.
    #[inline]
    pub fn image(&self, letter: SymbolId) -> SymbolId {
        self.perm[letter as usize]
    }

    pub fn invert(&self) -> Self {
        let mut inv = [0; N_LETTERS];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p as usize] = i as SymbolId;
        }
        Self { perm: inv }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &CipherMapping) -> Self {
        let mut perm = [0; N_LETTERS];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = self.perm[other.perm[i] as usize];
        }
        Self { perm }
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| p as usize == i)
    }

    /// Substitute letters, copying every other symbol. Rejects pad and unknown ids.
    pub fn apply(&self, symbols: &[SymbolId]) -> Result<Vec<SymbolId>> {
        symbols
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                if is_letter(s) {
                    Ok(self.image(s))
                } else if s == PAD {
                    Err(Error::UnexpectedPad(i))
                } else if (s as usize) < super::N_SYMBOLS {
                    Ok(s)
                } else {
                    Err(Error::InvalidId(s as u32))
                }
            })
            .collect()
    }

    pub fn encrypt(&self, plaintext: &CharSequence) -> Result<CharSequence> {
        expect_role(plaintext, Role::Plaintext)?;
        CharSequence::new(self.apply(plaintext.symbols())?, Role::Ciphertext)
    }

    /// Decrypt a ciphertext produced by `self.encrypt`.
    pub fn decrypt(&self, ciphertext: &CharSequence) -> Result<CharSequence> {
        expect_role(ciphertext, Role::Ciphertext)?;
        CharSequence::new(self.invert().apply(ciphertext.symbols())?, Role::Plaintext)
    }

    pub fn to_key_string(&self) -> String {
        self.perm.iter().map(|&p| (b'A' + p) as char).collect()
    }
}

fn expect_role(seq: &CharSequence, role: Role) -> Result<()> {
    if seq.role() == role {
        Ok(())
    } else {
        Err(Error::WrongRole {
            expected: role.name(),
            got: seq.role().name(),
        })
    }
}

/// Convenience: encrypt raw symbols.
pub fn encrypt(symbols: &[SymbolId], f: &CipherMapping) -> Result<Vec<SymbolId>> {
    f.apply(symbols)
}

pub fn invert(f: &CipherMapping) -> CipherMapping {
    f.invert()
}

pub fn sample_cipher(seed: u64) -> CipherMapping {
    CipherMapping::sample(seed)
}

impl Default for CipherMapping {
    fn default() -> Self {
        Self::identity()
    }
}

impl FromStr for CipherMapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.trim().as_bytes();
        if bytes.len() != N_LETTERS || !bytes.iter().all(u8::is_ascii_uppercase) {
            return Err(Error::InvalidKey(format!("{s:?} is not 26 uppercase letters")));
        }
        let mut perm = [0; N_LETTERS];
        for (p, b) in perm.iter_mut().zip(bytes) {
            *p = b - b'A';
        }
        Self::from_perm(perm).map_err(|_| Error::InvalidKey(format!("{s:?} repeats a letter")))
    }
}

impl fmt::Display for CipherMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_key_string())
    }
}

impl fmt::Debug for CipherMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CipherMapping({})", self.to_key_string())
    }
}

impl Serialize for CipherMapping {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_key_string())
    }
}

impl<'de> Deserialize<'de> for CipherMapping {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::encode;
    use proptest::prelude::*;

    #[test]
    fn sample_is_deterministic_and_bijective() {
        let a = CipherMapping::sample(11);
        assert_eq!(a, CipherMapping::sample(11));
        assert_ne!(a, CipherMapping::sample(12));
        let mut sorted = *a.perm();
        sorted.sort_unstable();
        assert_eq!(sorted, *CipherMapping::identity().perm());
    }

    #[test]
    fn invert_identity_and_swap() {
        let id = CipherMapping::identity();
        assert_eq!(id.invert(), id);
        let mut perm = *id.perm();
        perm.swap(0, 1);
        let swap = CipherMapping::from_perm(perm).unwrap();
        assert_eq!(swap.invert(), swap);
    }

    #[test]
    fn identity_cipher_is_noop() {
        let x = CharSequence::parse("THE SEA, AT LAST!", Role::Plaintext).unwrap();
        let c = CipherMapping::identity().encrypt(&x).unwrap();
        assert_eq!(c.symbols(), x.symbols());
        assert_eq!(c.role(), Role::Ciphertext);
    }

    #[test]
    fn encrypt_checks_role_and_pad() {
        let f = CipherMapping::sample(1);
        let c = CharSequence::parse("ABC", Role::Ciphertext).unwrap();
        assert!(matches!(f.encrypt(&c), Err(Error::WrongRole { .. })));
        assert!(matches!(f.apply(&[0, PAD]), Err(Error::UnexpectedPad(1))));
        assert!(matches!(f.apply(&[200]), Err(Error::InvalidId(200))));
    }

    #[test]
    fn key_string_parsing() {
        let f = CipherMapping::sample(3);
        assert_eq!(f.to_key_string().parse::<CipherMapping>().unwrap(), f);
        assert!("ABC".parse::<CipherMapping>().is_err());
        assert!("AACDEFGHIJKLMNOPQRSTUVWXYZ".parse::<CipherMapping>().is_err());
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json.len(), 28);
        assert_eq!(serde_json::from_str::<CipherMapping>(&json).unwrap(), f);
    }

    proptest! {
        #[test]
        fn round_trip_and_passthrough(seed in any::<u64>(), text in "[A-Z .,'\"!?;:-]{0,80}") {
            let f = CipherMapping::sample(seed);
            prop_assert_eq!(f.invert().invert(), f);
            prop_assert!(f.invert().compose(&f).is_identity());
            let x = CharSequence::parse(&text, Role::Plaintext).unwrap();
            let c = f.encrypt(&x).unwrap();
            prop_assert_eq!(c.len(), x.len());
            for (a, b) in x.symbols().iter().zip(c.symbols()) {
                prop_assert_eq!(is_letter(*a), is_letter(*b));
                if !is_letter(*a) {
                    prop_assert_eq!(a, b);
                }
            }
            let back = f.decrypt(&c).unwrap();
            prop_assert_eq!(back.symbols(), x.symbols());
        }

        #[test]
        fn distinct_letters_stay_distinct(seed in any::<u64>()) {
            let f = CipherMapping::sample(seed);
            let letters = encode("ABCDEFGHIJKLMNOPQRSTUVWXYZ").unwrap();
            let mut images = f.apply(&letters).unwrap();
            images.sort_unstable();
            images.dedup();
            prop_assert_eq!(images.len(), 26);
        }
    }
}
