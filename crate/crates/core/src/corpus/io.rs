use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::TextRecord;
use crate::error::{Error, Result};

/// One line of raw input, optionally tagged with a language.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RawLine {
    pub text: String,
    #[serde(default)]
    pub lang: Option<String>,
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// Read `.txt` (one record per line) or `.jsonl` (`{"text": .., "lang": ..}`).
pub fn read_raw_lines(path: &Path) -> Result<Vec<RawLine>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if is_jsonl(path) {
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawLine = serde_json::from_str(&line).map_err(|e| {
                Error::InvalidArgument(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            out.push(raw);
        } else {
            out.push(RawLine { text: line, lang: None });
        }
    }
    Ok(out)
}

/// Read cleaned records written by [`write_records`].
pub fn read_records(path: &Path) -> Result<Vec<TextRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if is_jsonl(path) {
            let mut r: TextRecord = serde_json::from_str(&line)?;
            r.length = r.text.chars().count();
            out.push(r);
        } else {
            out.push(TextRecord::new(line, None));
        }
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[TextRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        if is_jsonl(path) {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        } else {
            writeln!(w, "{}", r.text)?;
        }
    }
    w.flush()?;
    Ok(())
}
