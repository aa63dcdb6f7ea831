use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::TextRecord;
use crate::cipher::symbol_id;
use crate::error::{Error, Result};

/// Length bounds of the quote-corpus path.
pub const DEFAULT_MIN_LEN: usize = 15;
pub const DEFAULT_MAX_LEN: usize = 300;
const HISTOGRAM_BIN: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleanOptions {
    pub min_len: usize,
    pub max_len: usize,
    /// Replace accented letters by their unaccented base letter instead of
    /// dropping the line.
    pub fold_accents: bool,
}

impl Default for CleanOptions {
    fn default() -> Self {
        Self {
            min_len: DEFAULT_MIN_LEN,
            max_len: DEFAULT_MAX_LEN,
            fold_accents: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Empty,
    OutOfVocabulary,
    TooShort,
    TooLong,
}

/// Counts, drop reasons and a length histogram for one ingest run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub input_lines: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    /// Out-of-vocabulary characters and how many lines they knocked out.
    pub oov_chars: BTreeMap<char, usize>,
    pub histogram_bin_width: usize,
    /// `length_histogram[i]` counts kept records with length in `[i*w, (i+1)*w)`.
    pub length_histogram: Vec<usize>,
    pub mean_length: f64,
}

impl IngestReport {
    pub fn record_lengths(&mut self, lengths: impl IntoIterator<Item = usize>) {
        self.histogram_bin_width = HISTOGRAM_BIN;
        self.length_histogram.clear();
        let (mut total, mut n) = (0usize, 0usize);
        for len in lengths {
            let bin = len / HISTOGRAM_BIN;
            if self.length_histogram.len() <= bin {
                self.length_histogram.resize(bin + 1, 0);
            }
            self.length_histogram[bin] += 1;
            total += len;
            n += 1;
        }
        self.kept = n;
        self.mean_length = if n == 0 { 0.0 } else { total as f64 / n as f64 };
    }
}

/// Replace accented Latin letters with their base letter (NFD, then drop
/// combining marks). Ligatures and `ß` are expanded.
pub fn fold_accents(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.nfd() {
        match c {
            '\u{300}'..='\u{36f}' => {}
            'ß' => out.push_str("ss"),
            'æ' => out.push_str("ae"),
            'Æ' => out.push_str("AE"),
            'œ' => out.push_str("oe"),
            'Œ' => out.push_str("OE"),
            'ø' => out.push('o'),
            'Ø' => out.push('O'),
            _ => out.push(c),
        }
    }
    out
}

fn normalize_typography(c: char) -> char {
    match c {
        '\u{2018}' | '\u{2019}' | '`' => '\'',
        '\u{201c}' | '\u{201d}' => '"',
        '\u{2013}' | '\u{2014}' => '-',
        '\t' | '\n' | '\r' | '\u{a0}' => ' ',
        _ => c,
    }
}

fn is_closing_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':')
}

/// Uppercase, collapse whitespace and repair spacing around punctuation:
/// no space before `. , ! ? ; :`, exactly one space after them when a letter
/// follows. Does not check the vocabulary.
pub fn normalize_line(raw: &str) -> String {
    let upper: String = raw.chars().map(normalize_typography).collect::<String>().to_uppercase();
    let words: Vec<&str> = upper.split_whitespace().collect();
    let collapsed = words.join(" ");

    let chars: Vec<char> = collapsed.chars().collect();
    let mut out = String::with_capacity(chars.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        if c == ' ' && chars.get(i + 1).is_some_and(|&n| is_closing_punct(n)) {
            continue;
        }
        out.push(c);
        if is_closing_punct(c) && chars.get(i + 1).is_some_and(|n| n.is_alphabetic()) {
            out.push(' ');
        }
    }
    out
}

/// Clean one raw line. `Err` carries the reason the line was dropped.
pub fn clean_line(raw: &str, opts: &CleanOptions) -> std::result::Result<String, (DropReason, Option<char>)> {
    let folded;
    let source = if opts.fold_accents {
        folded = fold_accents(raw);
        folded.as_str()
    } else {
        raw
    };
    let text = normalize_line(source);
    if text.is_empty() {
        return Err((DropReason::Empty, None));
    }
    if let Some(bad) = text.chars().find(|&c| symbol_id(c).is_none()) {
        return Err((DropReason::OutOfVocabulary, Some(bad)));
    }
    let len = text.chars().count();
    if len < opts.min_len {
        return Err((DropReason::TooShort, None));
    }
    if len > opts.max_len {
        return Err((DropReason::TooLong, None));
    }
    Ok(text)
}

/// Clean a corpus of raw lines into records, with an ingest report.
pub fn clean_corpus<'a, I>(raw_lines: I, opts: &CleanOptions) -> Result<(Vec<TextRecord>, IngestReport)>
where
    I: IntoIterator<Item = (&'a str, Option<&'a str>)>,
{
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for (line, lang) in raw_lines {
        report.input_lines += 1;
        match clean_line(line, opts) {
            Ok(text) => records.push(TextRecord::new(text, lang.map(str::to_owned))),
            Err((reason, bad)) => {
                *report.dropped.entry(reason).or_default() += 1;
                if let Some(c) = bad {
                    *report.oov_chars.entry(c).or_default() += 1;
                }
            }
        }
    }
    report.record_lengths(records.iter().map(|r| r.length));
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(s: &str) -> std::result::Result<String, DropReason> {
        clean_line(s, &CleanOptions { min_len: 1, ..Default::default() }).map_err(|e| e.0)
    }

    #[test]
    fn punctuation_and_case_repair() {
        assert_eq!(clean("hello ,world").unwrap(), "HELLO, WORLD");
        assert_eq!(clean("  wait  .  what?no ").unwrap(), "WAIT. WHAT? NO");
        assert_eq!(clean("end.").unwrap(), "END.");
        assert_eq!(clean("he said \u{201c}go.\u{201d}").unwrap(), "HE SAID \"GO.\"");
        assert_eq!(clean("it\u{2019}s").unwrap(), "IT'S");
    }

    #[test]
    fn out_of_vocabulary_dropped() {
        assert_eq!(clean("café au lait"), Err(DropReason::OutOfVocabulary));
        assert_eq!(clean("50 cents"), Err(DropReason::OutOfVocabulary));
        assert_eq!(clean("   "), Err(DropReason::Empty));
    }

    #[test]
    fn accent_folding_path() {
        let opts = CleanOptions { min_len: 1, fold_accents: true, ..Default::default() };
        assert_eq!(clean_line("Café, Straße; œuvre", &opts).unwrap(), "CAFE, STRASSE; OEUVRE");
        assert_eq!(fold_accents("àéîõü ÇÑ"), "aeiou CN");
    }

    #[test]
    fn length_bounds_and_report() {
        let lines = ["short", "this line is long enough to keep", "x".repeat(301).leak(), "naïve line here ok"];
        let (records, report) = clean_corpus(lines.iter().map(|l| (*l, None)), &CleanOptions::default()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(report.input_lines, 4);
        assert_eq!(report.kept, 1);
        assert_eq!(report.dropped[&DropReason::TooShort], 1);
        assert_eq!(report.dropped[&DropReason::TooLong], 1);
        assert_eq!(report.dropped[&DropReason::OutOfVocabulary], 1);
        assert_eq!(report.oov_chars[&'Ï'], 1);
        assert_eq!(report.length_histogram.iter().sum::<usize>(), 1);
    }

    #[test]
    fn empty_corpus_is_error() {
        let r = clean_corpus([("é", None)], &CleanOptions::default());
        assert!(matches!(r, Err(Error::EmptyCorpus)));
    }
}
