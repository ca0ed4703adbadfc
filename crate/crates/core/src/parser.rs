//! Extraction of numbered `text_spanN` / `predictionN` / `tripletsN` /
//! `rationaleN` groups from model output.
//!
//! The scanner walks the raw text key by key instead of handing it to a JSON
//! parser, so it tolerates missing braces, trailing commas, single quotes,
//! unquoted values and code fences, while still decoding properly quoted JSON
//! strings exactly.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawClaim {
    /// 1-based claim number as written by the model.
    pub index: u32,
    pub text_span: String,
    pub prediction: String,
    pub triplets: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedResponse {
    /// Complete groups, sorted by index.
    pub claims: Vec<RawClaim>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("no complete claim group in model output ({} diagnostic(s))", .diagnostics.len())]
pub struct ParseError {
    pub raw: String,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Field {
    Span,
    Prediction,
    Triplets,
    Rationale,
}

impl Field {
    const ALL: [Field; 4] = [Field::Span, Field::Prediction, Field::Triplets, Field::Rationale];

    fn key(self) -> &'static str {
        match self {
            Field::Span => "text_span",
            Field::Prediction => "prediction",
            Field::Triplets => "triplets",
            Field::Rationale => "rationale",
        }
    }

    fn from_key(k: &str) -> Self {
        let k = k.to_ascii_lowercase();
        if k.starts_with("text") {
            Field::Span
        } else if k.starts_with("pred") {
            Field::Prediction
        } else if k.starts_with("trip") {
            Field::Triplets
        } else {
            Field::Rationale
        }
    }
}

fn key_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)(?:^|[{,\n\[])[ \t]*[-*]?[ \t]*["']?(text[ _]?span|prediction|triplets?|rationale)[ \t]*(\d*)["']?[ \t]*:"#)
            .expect("static regex")
    })
}

/// Reads a quoted value starting at `start` (which holds the quote char).
/// Returns the decoded string and the byte offset just past the closing quote.
fn read_quoted(s: &str, start: usize) -> Option<(String, usize)> {
    let quote = s[start..].chars().next()?;
    let mut escaped = false;
    for (off, ch) in s[start + 1..].char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match ch {
            '\\' => escaped = true,
            c if c == quote => {
                let end = start + 1 + off;
                let body = &s[start + 1..end];
                let decoded = if quote == '"' {
                    serde_json::from_str::<String>(&s[start..=end]).unwrap_or_else(|_| body.to_string())
                } else {
                    body.replace("\\'", "'")
                };
                return Some((decoded, end + 1));
            }
            _ => {}
        }
    }
    None
}

/// Reads a bracketed list value, returning its elements one per line.
fn read_list(s: &str, start: usize) -> Option<(String, usize)> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (off, ch) in s[start..].char_indices() {
        if in_str {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_str = false;
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    let end = start + off + 1;
                    let text = &s[start..end];
                    let value = match serde_json::from_str::<serde_json::Value>(text) {
                        Ok(serde_json::Value::Array(items)) => {
                            items.iter().map(list_item).collect::<Vec<_>>().join("\n")
                        }
                        _ => text.to_string(),
                    };
                    return Some((value, end));
                }
            }
            _ => {}
        }
    }
    None
}

fn list_item(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(parts) => {
            let parts: Vec<String> = parts.iter().map(list_item).collect();
            format!("({})", parts.join(", "))
        }
        other => other.to_string(),
    }
}

fn clean_bare(v: &str) -> String {
    let v = v.trim();
    let v = v.trim_end_matches(|c: char| c == ',' || c == '}' || c.is_whitespace());
    let v = v.trim_end_matches("```").trim_end();
    let v = v.trim_end_matches(',').trim();
    let v = v.strip_prefix('"').unwrap_or(v);
    let v = v.strip_suffix('"').unwrap_or(v);
    v.trim().to_string()
}

struct Entry {
    field: Field,
    index: u32,
}

pub fn parse_response(raw: &str) -> Result<ParsedResponse, ParseError> {
    let re = key_regex();
    let mut entries: Vec<(Entry, String)> = Vec::new();
    let mut unnumbered_seen: BTreeMap<Field, u32> = BTreeMap::new();
    let mut pos = 0;

    while let Some(m) = re.captures_at(raw, pos) {
        let whole = m.get(0).expect("match");
        let field = Field::from_key(&m[1]);
        let index = match m[2].parse::<u32>() {
            Ok(i) => i,
            Err(_) => {
                let seen = unnumbered_seen.entry(field).or_insert(0);
                *seen += 1;
                *seen
            }
        };
        let mut vstart = whole.end();
        while raw[vstart..].starts_with([' ', '\t']) {
            vstart += 1;
        }
        let quoted = match raw[vstart..].chars().next() {
            Some('"') | Some('\'') => read_quoted(raw, vstart),
            Some('[') => read_list(raw, vstart),
            _ => None,
        };
        let (value, next) = match quoted {
            Some(v) => v,
            None => {
                let end = re.find_at(raw, vstart).map(|n| n.start()).unwrap_or(raw.len());
                (clean_bare(&raw[vstart..end]), end)
            }
        };
        entries.push((Entry { field, index }, value));
        pos = next.max(vstart);
        if pos >= raw.len() {
            break;
        }
    }

    let mut diagnostics = Vec::new();
    let mut groups: BTreeMap<u32, [Option<String>; 4]> = BTreeMap::new();
    let mut first_seen: Vec<u32> = Vec::new();
    let mut key_order: BTreeMap<u32, Vec<Field>> = BTreeMap::new();
    for (entry, value) in entries {
        let slot = &mut groups.entry(entry.index).or_default()[entry.field as usize];
        if !first_seen.contains(&entry.index) {
            first_seen.push(entry.index);
        }
        key_order.entry(entry.index).or_default().push(entry.field);
        if slot.is_some() {
            diagnostics.push(format!(
                "duplicate key `{}{}`; keeping the first value",
                entry.field.key(),
                entry.index
            ));
        } else {
            *slot = Some(value);
        }
    }
    if first_seen.windows(2).any(|w| w[0] > w[1]) {
        diagnostics.push("claim groups appear out of numeric order".to_string());
    }
    for (index, order) in &key_order {
        if order.windows(2).any(|w| w[0] > w[1]) {
            diagnostics.push(format!("keys of claim {index} are out of the expected order"));
        }
    }

    let mut claims = Vec::new();
    for (index, [span, prediction, triplets, rationale]) in groups {
        match (span, prediction, triplets, rationale) {
            (Some(text_span), Some(prediction), Some(triplets), Some(rationale)) => {
                claims.push(RawClaim { index, text_span, prediction, triplets, rationale })
            }
            (s, p, t, r) => {
                let missing: Vec<&str> = [s.is_none(), p.is_none(), t.is_none(), r.is_none()]
                    .iter()
                    .zip(Field::ALL)
                    .filter(|(absent, _)| **absent)
                    .map(|(_, f)| f.key())
                    .collect();
                diagnostics.push(format!("claim {index} is missing {}; dropped", missing.join(", ")));
            }
        }
    }

    if claims.is_empty() {
        if diagnostics.is_empty() {
            diagnostics.push("no claim keys found".to_string());
        }
        return Err(ParseError { raw: raw.to_string(), diagnostics });
    }
    Ok(ParsedResponse { claims, diagnostics })
}

/// Writes claims in the numbered-key layout the model is asked to produce.
pub fn render_response(claims: &[RawClaim]) -> String {
    let quote = |s: &str| serde_json::to_string(s).expect("string serializes");
    let mut lines = Vec::with_capacity(claims.len() * 4);
    for c in claims {
        let i = c.index;
        lines.push(format!("\"text_span{i}\": {}", quote(&c.text_span)));
        lines.push(format!("\"prediction{i}\": {}", quote(&c.prediction)));
        lines.push(format!("\"triplets{i}\": {}", quote(&c.triplets)));
        lines.push(format!("\"rationale{i}\": {}", quote(&c.rationale)));
    }
    format!("{{\n{}\n}}", lines.join(",\n"))
}
