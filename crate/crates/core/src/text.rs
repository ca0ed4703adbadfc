//! String normalization and character-offset helpers shared by the linker,
//! the knowledge graph indexes and the response validator.

use caseless::Caseless;

/// Unicode case-fold, trim, and collapse every internal whitespace run to a
/// single space.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().default_case_fold());
    }
    out
}

/// A normalized copy of some text together with, for every normalized char,
/// the char offset in the source it was produced from.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    pub text: String,
    pub origin: Vec<usize>,
}

impl NormalizedText {
    pub fn new(source: &str) -> Self {
        let mut text = String::with_capacity(source.len());
        let mut origin = Vec::with_capacity(source.len());
        let mut pending_space: Option<usize> = None;
        for (ci, ch) in source.chars().enumerate() {
            if ch.is_whitespace() {
                if !origin.is_empty() && pending_space.is_none() {
                    pending_space = Some(ci);
                }
                continue;
            }
            if let Some(at) = pending_space.take() {
                text.push(' ');
                origin.push(at);
            }
            for folded in std::iter::once(ch).default_case_fold() {
                text.push(folded);
                origin.push(ci);
            }
        }
        Self { text, origin }
    }

    /// Finds `needle` (already normalized) and maps the hit back to a
    /// `[start, end)` char range of the source.
    pub fn find(&self, needle: &str) -> Option<(usize, usize)> {
        if needle.is_empty() {
            return None;
        }
        let byte_at = self.text.find(needle)?;
        let start_char = self.text[..byte_at].chars().count();
        let len = needle.chars().count();
        let start = self.origin[start_char];
        let end = self.origin[start_char + len - 1] + 1;
        Some((start, end))
    }
}

/// Byte offset of every char boundary, plus the total length at the end, so
/// `char_slice` can cut by char offsets in O(1).
pub fn char_boundaries(text: &str) -> Vec<usize> {
    let mut v: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    v.push(text.len());
    v
}

/// Slice by `[start, end)` char offsets. Panics when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let b = char_boundaries(text);
    &text[b[start]..b[end]]
}

/// Char offset of the first exact occurrence of `needle`.
pub fn find_chars(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    if needle.is_empty() {
        return None;
    }
    let at = haystack.find(needle)?;
    let start = haystack[..at].chars().count();
    Some((start, start + needle.chars().count()))
}
