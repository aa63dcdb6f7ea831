use super::clean::fold_accents;

/// Segment length of the multilingual corpus path.
pub const DEFAULT_SEGMENT_LEN: usize = 256;
/// Per-language segment cap of the multilingual corpus path.
pub const DEFAULT_SEGMENTS_PER_LANGUAGE: usize = 25_000;

/// Accumulate whitespace-delimited words across rows until the joined buffer
/// reaches `target_len` characters, then emit it as one segment.
///
/// Accents are folded before accumulation, words are never split, and a
/// trailing buffer shorter than `target_len` is discarded. At most `cap`
/// segments are produced when a cap is given.
pub fn build_segments<S: AsRef<str>>(rows: &[S], target_len: usize, cap: Option<usize>) -> Vec<String> {
    let mut segments = Vec::new();
    let mut buffer: Vec<String> = Vec::new();
    let mut joined_len = 0usize;
    for row in rows {
        let row = fold_accents(row.as_ref());
        for word in row.split_whitespace() {
            if cap.is_some_and(|c| segments.len() >= c) {
                return segments;
            }
            joined_len += word.chars().count() + usize::from(!buffer.is_empty());
            buffer.push(word.to_owned());
            if joined_len >= target_len {
                segments.push(buffer.join(" "));
                buffer.clear();
                joined_len = 0;
            }
        }
    }
    segments
}
