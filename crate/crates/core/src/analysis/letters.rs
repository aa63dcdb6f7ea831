use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::{eval_cipher, Decoder};
use crate::cipher::{is_letter, symbol_char, SymbolId, N_LETTERS};
use crate::error::{Error, Result};
use crate::exec::Execution;

const ENGLISH_TABLE: &str = include_str!("../../data/english_letter_frequencies.csv");

/// Relative letter frequencies, normalized to sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterFrequencies {
    pub fractions: [f64; N_LETTERS],
}

impl LetterFrequencies {
    /// The bundled English table.
    pub fn english() -> Self {
        Self::from_csv(ENGLISH_TABLE).expect("bundled frequency table is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Parse `letter,<weight>` rows. Lines starting with `#` are comments;
    /// any scale works since the weights are renormalized.
    pub fn from_csv(text: &str) -> Result<Self> {
        let body: String = text.lines().filter(|l| !l.trim_start().starts_with('#')).map(|l| format!("{l}\n")).collect();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let mut weights = [f64::NAN; N_LETTERS];
        for row in reader.records() {
            let row = row?;
            let letter = row.get(0).unwrap_or("");
            let mut chars = letter.chars();
            let idx = match (chars.next().map(|c| c.to_ascii_uppercase()), chars.next()) {
                (Some(c @ 'A'..='Z'), None) => c as usize - 'A' as usize,
                _ => return Err(Error::InvalidArgument(format!("bad letter {letter:?} in frequency table"))),
            };
            let w: f64 = row
                .get(1)
                .and_then(|v| v.parse().ok())
                .filter(|v: &f64| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::InvalidArgument(format!("bad weight for {letter} in frequency table")))?;
            weights[idx] = w;
        }
        if let Some(i) = weights.iter().position(|w| w.is_nan()) {
            return Err(Error::InvalidArgument(format!("frequency table is missing {}", (b'A' + i as u8) as char)));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("frequency table sums to zero".into()));
        }
        Ok(Self { fractions: weights.map(|w| w / total) })
    }

    /// Letters by descending frequency, ties to the lower id.
    pub fn ranking(&self) -> [SymbolId; N_LETTERS] {
        let mut order: [SymbolId; N_LETTERS] = std::array::from_fn(|i| i as SymbolId);
        order.sort_by(|&a, &b| self.fractions[b as usize].total_cmp(&self.fractions[a as usize]).then(a.cmp(&b)));
        order
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterRow {
    pub letter: char,
    pub occurrences: usize,
    pub errors: usize,
    pub ser: f64,
    pub frequency: f64,
    pub profile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterProfile {
    pub rows: Vec<LetterRow>,
    /// Set when no letter has any error; the profile is then reported as zeros.
    pub degenerate: bool,
}

/// `s_i f_i / Σ s_j f_j − f_i` per letter. Returns zeros and `true` when
/// every weighted error is zero.
pub fn profile_from_ser(ser: &[f64; N_LETTERS], freqs: &LetterFrequencies) -> ([f64; N_LETTERS], bool) {
    let weighted: Vec<f64> = ser.iter().zip(&freqs.fractions).map(|(s, f)| s * f).collect();
    let total: f64 = weighted.iter().sum();
    if total <= 0.0 {
        return ([0.0; N_LETTERS], true);
    }
    (std::array::from_fn(|i| weighted[i] / total - freqs.fractions[i]), false)
}

/// Per-letter error rates of `decoder` on `plaintexts` (each under its own
/// evaluation cipher), turned into the frequency-weighted profile.
pub fn letter_error_profile<D: Decoder + ?Sized>(
    decoder: &D,
    plaintexts: &[Vec<SymbolId>],
    cipher_seed: u64,
    freqs: &LetterFrequencies,
    exec: Execution,
) -> Result<LetterProfile> {
    let per_seq = exec.map_range(plaintexts.len(), |i| -> Result<([usize; N_LETTERS], [usize; N_LETTERS])> {
        let plain = &plaintexts[i];
        let decoded = decoder.decode(&eval_cipher(cipher_seed, i).apply(plain)?)?;
        if decoded.len() != plain.len() {
            return Err(Error::LengthMismatch(decoded.len(), plain.len()));
        }
        let mut occ = [0; N_LETTERS];
        let mut err = [0; N_LETTERS];
        for (&p, &d) in plain.iter().zip(&decoded) {
            if is_letter(p) {
                occ[p as usize] += 1;
                err[p as usize] += usize::from(p != d);
            }
        }
        Ok((occ, err))
    });
    let mut occurrences = [0usize; N_LETTERS];
    let mut errors = [0usize; N_LETTERS];
    for r in per_seq {
        let (o, e) = r?;
        for i in 0..N_LETTERS {
            occurrences[i] += o[i];
            errors[i] += e[i];
        }
    }
    let ser: [f64; N_LETTERS] =
        std::array::from_fn(|i| if occurrences[i] == 0 { 0.0 } else { errors[i] as f64 / occurrences[i] as f64 });
    let (profile, degenerate) = profile_from_ser(&ser, freqs);
    let rows = (0..N_LETTERS)
        .map(|i| LetterRow {
            letter: symbol_char(i as SymbolId).expect("letter"),
            occurrences: occurrences[i],
            errors: errors[i],
            ser: ser[i],
            frequency: freqs.fractions[i],
            profile: profile[i],
        })
        .collect();
    Ok(LetterProfile { rows, degenerate })
}

pub fn write_letter_profile_csv(profile: &LetterProfile, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &profile.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Same data in long format: `letter,quantity,value`.
pub fn write_letter_profile_long(profile: &LetterProfile, out: &mut impl Write) -> Result<()> {
    writeln!(out, "letter,quantity,value")?;
    for r in &profile.rows {
        for (q, v) in [("ser", r.ser), ("frequency", r.frequency), ("profile", r.profile)] {
            writeln!(out, "{},{q},{v}", r.letter)?;
        }
    }
    Ok(())
}
