//! Checks parsed claims against the input text and the evidence that was
//! actually retrieved. Nothing here fails: every problem becomes a
//! diagnostic on the claim, and unverifiable claims lose their label.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg::{CandidateTriplet, KnowledgeGraph, Triplet};
use crate::parser::RawClaim;
use crate::retrieval::RetrievedTriplets;
use crate::text::{find_chars, normalize, NormalizedText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictionLabel {
    Attributable,
    Extrapolatory,
    Contradictory,
    NoAttribution,
}

impl PredictionLabel {
    /// Maps a model-written label. `NoAttribution` is never produced here.
    pub fn parse_model_label(s: &str) -> Option<Self> {
        let cleaned: String = s.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        match cleaned.as_str() {
            "attributable" => Some(Self::Attributable),
            "extrapolatory" => Some(Self::Extrapolatory),
            "contradictory" => Some(Self::Contradictory),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Attributable => "Attributable",
            Self::Extrapolatory => "Extrapolatory",
            Self::Contradictory => "Contradictory",
            Self::NoAttribution => "NoAttribution",
        }
    }
}

impl fmt::Display for PredictionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimResult {
    pub span: String,
    /// Char offsets into the input text; absent when the span was not found.
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub prediction: PredictionLabel,
    #[serde(rename = "triplets")]
    pub rel_triplets: Vec<Triplet>,
    pub rationale: String,
    pub diagnostics: Vec<String>,
}

impl ClaimResult {
    pub fn range(&self) -> Option<(usize, usize)> {
        self.start.zip(self.end)
    }
}

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "by", "for", "from", "had", "has", "have", "he", "her",
    "his", "in", "into", "is", "it", "its", "of", "on", "or", "she", "that", "the", "their", "they", "this",
    "to", "was", "were", "which", "who", "with",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpanMatch {
    Exact,
    Normalized,
    /// Token match ignoring punctuation; `skipped` stop-words of the input
    /// were absent from the span.
    Tokens { skipped: usize },
}

fn word_tokens(text: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        } else if !current.is_empty() {
            out.push((normalize(&current), start, i));
            current.clear();
        }
        n = i + 1;
    }
    if !current.is_empty() {
        out.push((normalize(&current), start, n));
    }
    out
}

fn token_match(input: &[(String, usize, usize)], span: &[(String, usize, usize)]) -> Option<(usize, usize, usize)> {
    let first = &span.first()?.0;
    for begin in 0..input.len() {
        if &input[begin].0 != first {
            continue;
        }
        let (mut i, mut j, mut skipped) = (begin + 1, 1, 0);
        while j < span.len() && i < input.len() {
            if input[i].0 == span[j].0 {
                j += 1;
            } else if STOP_WORDS.contains(&input[i].0.as_str()) {
                skipped += 1;
            } else {
                break;
            }
            i += 1;
        }
        if j == span.len() {
            return Some((input[begin].1, input[i - 1].2, skipped));
        }
    }
    None
}

fn locate(input: &str, normalized: &NormalizedText, tokens: &[(String, usize, usize)], span: &str) -> Option<(usize, usize, SpanMatch)> {
    if let Some((s, e)) = find_chars(input, span) {
        return Some((s, e, SpanMatch::Exact));
    }
    if let Some((s, e)) = normalized.find(&normalize(span)) {
        return Some((s, e, SpanMatch::Normalized));
    }
    let span_tokens = word_tokens(span);
    token_match(tokens, &span_tokens).map(|(s, e, skipped)| (s, e, SpanMatch::Tokens { skipped }))
}

fn is_na(s: &str) -> bool {
    let t = s.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '[' || c == ']').trim();
    t.is_empty() || ["na", "n/a", "none", "null", "[]"].contains(&t.to_ascii_lowercase().as_str())
}

/// Splits on `sep` outside double quotes.
fn split_outside_quotes(s: &str, sep: char) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut in_quote = false;
    for c in s.chars() {
        match c {
            '"' => {
                in_quote = !in_quote;
                current.push(c);
            }
            c if c == sep && !in_quote => parts.push(std::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    parts.push(current);
    parts
}

fn strip_part(p: &str) -> String {
    p.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '`').trim().to_string()
}

/// Outermost parenthesized groups, or `None` when the line has no `(`.
fn paren_groups(s: &str) -> Option<Vec<String>> {
    if !s.contains('(') {
        return None;
    }
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in s.chars() {
        match c {
            '(' => {
                if depth > 0 {
                    current.push(c);
                }
                depth += 1;
            }
            ')' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    groups.push(std::mem::take(&mut current));
                } else {
                    current.push(c);
                }
            }
            c if depth > 0 => current.push(c),
            _ => {}
        }
    }
    Some(groups)
}

/// Each item written in the triplets field, with every plausible
/// `(subject, predicate, object)` reading of it, most likely first.
fn triplet_readings(field: &str) -> Vec<(String, Vec<CandidateTriplet>)> {
    if is_na(field) {
        return Vec::new();
    }
    let items: Vec<String> = field
        .split(['\n', ';'])
        .flat_map(|line| match paren_groups(line) {
            Some(groups) => groups,
            None => vec![line.trim().trim_start_matches(['-', '*', '[']).trim_end_matches([']', ',']).trim().to_string()],
        })
        .filter(|l| !l.trim().is_empty() && !is_na(l))
        .collect();
    items
        .into_iter()
        .map(|item| {
            let mut readings = Vec::new();
            if item.contains('|') {
                let parts: Vec<String> = item.split('|').map(strip_part).collect();
                if parts.len() == 3 {
                    readings.push(CandidateTriplet::new(&parts[0], &parts[1], &parts[2]));
                }
            }
            let parts: Vec<String> = split_outside_quotes(&item, ',').iter().map(|p| strip_part(p)).collect();
            if parts.len() >= 3 {
                // Commas may sit inside labels: try every split into three
                // contiguous groups.
                for a in 1..parts.len() - 1 {
                    for b in a + 1..parts.len() {
                        readings.push(CandidateTriplet::new(
                            parts[..a].join(", "),
                            parts[a..b].join(", "),
                            parts[b..].join(", "),
                        ));
                    }
                }
            }
            (item, readings)
        })
        .collect()
}

/// Validates spans, labels and evidence for each parsed claim, in model
/// order.
pub fn validate_claims(
    raws: &[RawClaim],
    input_text: &str,
    retrieved: &RetrievedTriplets,
    kg: &KnowledgeGraph,
) -> Vec<ClaimResult> {
    let normalized = NormalizedText::new(input_text);
    let tokens = word_tokens(input_text);
    let retrieved_set: HashSet<&Triplet> = retrieved.triplets.iter().collect();
    let by_labels: HashMap<(String, String, String), &Triplet> = retrieved
        .triplets
        .iter()
        .map(|t| ((normalize(&t.subject_label), normalize(&t.predicate), normalize(&t.object_label)), t))
        .collect();

    let mut results: Vec<ClaimResult> = Vec::with_capacity(raws.len());
    for raw in raws {
        let mut diagnostics = Vec::new();
        let mut downgrade: Option<String> = None;

        let located = if is_na(&raw.text_span) {
            None
        } else {
            locate(input_text, &normalized, &tokens, &raw.text_span)
        };
        let (start, end) = match located {
            Some((s, e, kind)) => {
                match kind {
                    SpanMatch::Exact => {}
                    SpanMatch::Normalized => diagnostics.push("span matched only after case/whitespace normalization".into()),
                    SpanMatch::Tokens { skipped: 0 } => diagnostics.push("span matched only after ignoring punctuation".into()),
                    SpanMatch::Tokens { skipped } => {
                        diagnostics.push(format!("span omits {skipped} word(s) of the input text"));
                        downgrade = Some("span does not reproduce the input text".into());
                    }
                }
                (Some(s), Some(e))
            }
            None => {
                downgrade = Some("span not found in input text".into());
                (None, None)
            }
        };

        let label = PredictionLabel::parse_model_label(&raw.prediction);
        if label.is_none() {
            downgrade.get_or_insert_with(|| format!("unrecognized prediction `{}`", raw.prediction.trim()));
        }

        let mut rel_triplets: Vec<Triplet> = Vec::new();
        for (item, readings) in triplet_readings(&raw.triplets) {
            let hit = readings.iter().find_map(|c| {
                let key = (normalize(&c.subject), normalize(&c.predicate), normalize(&c.object));
                by_labels.get(&key).map(|t| ((*t).clone(), true)).or_else(|| {
                    kg.contains_triplet(c).map(|t| (t.clone(), retrieved_set.contains(t)))
                })
            });
            match hit {
                Some((t, in_retrieved)) => {
                    if !in_retrieved {
                        diagnostics.push(format!("triplet {} is in the knowledge graph but was not retrieved", t.render()));
                    }
                    if !rel_triplets.contains(&t) {
                        rel_triplets.push(t);
                    }
                }
                None => diagnostics.push(format!("triplet `{item}` not found in retrieved evidence or knowledge graph; dropped")),
            }
        }

        let prediction = match (downgrade, label) {
            (Some(reason), _) => {
                diagnostics.push(format!("{reason}; prediction set to NoAttribution"));
                PredictionLabel::NoAttribution
            }
            (None, Some(l @ (PredictionLabel::Attributable | PredictionLabel::Contradictory))) if rel_triplets.is_empty() => {
                diagnostics.push(format!("{l} claim has no verified triplets; prediction set to NoAttribution"));
                PredictionLabel::NoAttribution
            }
            (None, Some(l)) => l,
            (None, None) => unreachable!("missing label always sets a downgrade reason"),
        };

        if let (Some(s), Some(e)) = (start, end) {
            for (k, other) in results.iter().enumerate() {
                if let Some((os, oe)) = other.range() {
                    if s < oe && os < e {
                        diagnostics.push(format!("span overlaps claim {}", k + 1));
                    }
                }
            }
        }

        results.push(ClaimResult {
            span: raw.text_span.clone(),
            start,
            end,
            prediction,
            rel_triplets,
            rationale: raw.rationale.clone(),
            diagnostics,
        });
    }
    results
}
