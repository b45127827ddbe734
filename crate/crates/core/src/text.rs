//! Character-offset helpers. All public offsets in the crate count Unicode
//! scalar values, not bytes.

use crate::error::{Error, Result};

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset table for one string, indexed by char offset.
#[derive(Debug, Clone)]
pub struct CharIndex {
    bytes: Vec<usize>,
}

impl CharIndex {
    pub fn new(s: &str) -> Self {
        let mut bytes: Vec<usize> = s.char_indices().map(|(b, _)| b).collect();
        bytes.push(s.len());
        CharIndex { bytes }
    }

    pub fn len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte(&self, ch: usize) -> usize {
        self.bytes[ch]
    }

    /// Char offset of a byte offset that falls on a char boundary.
    pub fn char_of(&self, byte: usize) -> usize {
        self.bytes.binary_search(&byte).unwrap_or_else(|i| i)
    }

    pub fn slice<'a>(&self, s: &'a str, start: usize, end: usize) -> &'a str {
        &s[self.bytes[start]..self.bytes[end]]
    }
}

pub fn slice_chars(s: &str, start: usize, end: usize) -> Result<&str> {
    let idx = CharIndex::new(s);
    if start > end || end > idx.len() {
        return Err(Error::OutOfBounds { start, end, len: idx.len() });
    }
    Ok(idx.slice(s, start, end))
}

/// Applies non-overlapping `(start, end, replacement)` edits right to left so
/// earlier offsets stay valid.
pub fn apply_edits(s: &str, edits: &[(usize, usize, String)]) -> Result<String> {
    let idx = CharIndex::new(s);
    let mut order: Vec<usize> = (0..edits.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(edits[i].0));
    let mut out = s.to_string();
    let mut bound = idx.len();
    for i in order {
        let (start, end, ref rep) = edits[i];
        if start > end || end > idx.len() {
            return Err(Error::OutOfBounds { start, end, len: idx.len() });
        }
        if end > bound {
            return Err(Error::OverlappingSpans(start, end));
        }
        out.replace_range(idx.byte(start)..idx.byte(end), rep);
        bound = start;
    }
    Ok(out)
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// True when `[start, end)` in `chars` is not glued to neighbouring
/// alphanumerics.
pub fn word_bounded(chars: &[char], start: usize, end: usize) -> bool {
    let left_ok = start == 0 || !is_word_char(chars[start - 1]) || !is_word_char(chars[start]);
    let right_ok = end >= chars.len() || !is_word_char(chars[end]) || !is_word_char(chars[end - 1]);
    left_ok && right_ok
}

/// Word-bounded substring test.
pub fn contains_bounded(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    find_bounded(haystack, needle).is_some()
}

/// First word-bounded occurrence of `needle`, as a char offset.
pub fn find_bounded(haystack: &str, needle: &str) -> Option<usize> {
    let idx = CharIndex::new(haystack);
    let chars: Vec<char> = haystack.chars().collect();
    let n = char_len(needle);
    for (b, _) in haystack.match_indices(needle) {
        let start = idx.char_of(b);
        if word_bounded(&chars, start, start + n) {
            return Some(start);
        }
    }
    None
}
