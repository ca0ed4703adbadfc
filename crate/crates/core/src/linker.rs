//! Preprocessing: rewrite hooks, dictionary entity linking over the graph's
//! label index, and sentence-aware chunking for long inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KnowledgeGraph, NodeId};
use crate::text::normalize;

/// A mention in the text resolved to a graph node. Offsets are char offsets,
/// `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedEntity {
    pub mention: String,
    pub start: usize,
    pub end: usize,
    pub node: NodeId,
    /// Other nodes sharing the same label, when the mention was ambiguous.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternates: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextChunk {
    pub text: String,
    /// Char offset of the chunk in the original text.
    pub offset: usize,
    /// Set when this chunk came from cutting a single over-long sentence.
    #[serde(default)]
    pub hard_split: bool,
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Leftmost-longest dictionary scan. Candidate spans start and end on word
/// boundaries; matching is case-insensitive via the label index. Ambiguous
/// labels resolve to the smallest node id.
pub fn link_entities(kg: &KnowledgeGraph, text: &str) -> Vec<LinkedEntity> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let max_words = kg.max_label_words();
    let mut out = Vec::new();
    if n == 0 || max_words == 0 {
        return out;
    }

    let can_start =
        |i: usize| !chars[i].is_whitespace() && (i == 0 || !(is_word(chars[i - 1]) && is_word(chars[i])));
    let can_end =
        |j: usize| !chars[j - 1].is_whitespace() && (j == n || !(is_word(chars[j - 1]) && is_word(chars[j])));

    let mut i = 0;
    while i < n {
        if !can_start(i) {
            i += 1;
            continue;
        }
        let mut best: Option<(usize, Vec<NodeId>)> = None;
        let mut words = 1;
        let mut candidate = String::new();
        for j in i + 1..=n {
            let c = chars[j - 1];
            if c.is_whitespace() && !chars[j - 2].is_whitespace() {
                words += 1;
                if words > max_words {
                    break;
                }
            }
            candidate.push(c);
            if !can_end(j) {
                continue;
            }
            let key = normalize(&candidate);
            if kg.has_label_key(&key) {
                best = Some((j, kg.lookup_normalized(&key)));
            }
        }
        match best {
            Some((end, mut ids)) => {
                let node = ids.remove(0);
                out.push(LinkedEntity {
                    mention: chars[i..end].iter().collect(),
                    start: i,
                    end,
                    node,
                    alternates: ids,
                });
                i = end;
            }
            None => i += 1,
        }
    }
    out
}

/// `[start, end)` char ranges of sentences. A sentence ends after `.`, `?`
/// or `!` followed by whitespace and an uppercase letter, or by the end of
/// the text; trailing whitespace belongs to the preceding sentence.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut k = 0;
    while k < n {
        if matches!(chars[k], '.' | '?' | '!') {
            let mut m = k + 1;
            while m < n && chars[m].is_whitespace() {
                m += 1;
            }
            let boundary = m == n || (m > k + 1 && chars[m].is_uppercase());
            if boundary {
                spans.push((start, m));
                start = m;
                k = m;
                continue;
            }
        }
        k += 1;
    }
    if start < n {
        spans.push((start, n));
    }
    spans
}

/// Packs whole sentences into chunks of at most `budget` chars; a sentence
/// longer than the budget is cut into `budget`-sized pieces.
///
/// Panics if `budget` is zero.
pub fn chunk_text(text: &str, budget: usize) -> Vec<TextChunk> {
    assert!(budget >= 1, "chunk budget must be at least 1");
    let chars: Vec<char> = text.chars().collect();
    let slice = |a: usize, b: usize| chars[a..b].iter().collect::<String>();
    let mut chunks = Vec::new();
    let mut current: Option<(usize, usize)> = None;

    for (a, b) in sentence_spans(text) {
        if b - a > budget {
            if let Some((cs, ce)) = current.take() {
                chunks.push(TextChunk { text: slice(cs, ce), offset: cs, hard_split: false });
            }
            let mut s = a;
            while s < b {
                let e = (s + budget).min(b);
                chunks.push(TextChunk { text: slice(s, e), offset: s, hard_split: true });
                s = e;
            }
            continue;
        }
        current = match current {
            Some((cs, _)) if b - cs <= budget => Some((cs, b)),
            Some((cs, ce)) => {
                chunks.push(TextChunk { text: slice(cs, ce), offset: cs, hard_split: false });
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((cs, ce)) = current {
        chunks.push(TextChunk { text: slice(cs, ce), offset: cs, hard_split: false });
    }
    chunks
}

pub type HookError = Box<dyn std::error::Error + Send + Sync>;

/// A text rewrite applied before linking, e.g. coreference resolution.
pub trait TextHook: Send + Sync {
    fn name(&self) -> &str;
    fn rewrite(&self, text: &str) -> Result<String, HookError>;
}

/// Adapts a closure into a [`TextHook`].
pub struct FnHook<F> {
    name: String,
    f: F,
}

impl<F> FnHook<F>
where
    F: Fn(&str) -> Result<String, HookError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> TextHook for FnHook<F>
where
    F: Fn(&str) -> Result<String, HookError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn rewrite(&self, text: &str) -> Result<String, HookError> {
        (self.f)(text)
    }
}

#[derive(Debug, Error)]
#[error("preprocessing hook `{hook}` failed: {source}")]
pub struct PreprocessError {
    pub hook: String,
    #[source]
    pub source: HookError,
}

/// Applies `hooks` in order, then links entities on the rewritten text.
pub fn preprocess(
    kg: &KnowledgeGraph,
    text: &str,
    hooks: &[&dyn TextHook],
) -> Result<(String, Vec<LinkedEntity>), PreprocessError> {
    let mut current = text.to_string();
    for hook in hooks {
        current = hook
            .rewrite(&current)
            .map_err(|source| PreprocessError { hook: hook.name().to_string(), source })?;
    }
    let entities = link_entities(kg, &current);
    Ok((current, entities))
}
