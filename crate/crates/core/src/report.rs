//! The verification report and its JSON, ANSI and HTML renderings.
//!
//! Claim spans are colored by prediction: green Attributable, amber
//! Extrapolatory, red Contradictory, gray NoAttribution. Where spans overlap,
//! the later claim's color is drawn on top.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::kg::Triplet;
use crate::linker::LinkedEntity;
use crate::retrieval::{KgPath, RetrievalConfig, RetrievedTriplets};
use crate::scoring::{kg_attribution_score, ScoredClaim, ScoringConfig};
use crate::validate::PredictionLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityView {
    #[serde(flatten)]
    pub entity: LinkedEntity,
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub scoring: ScoringConfig,
    pub retrieval: RetrievalConfig,
    pub chunk_chars: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub input_text: String,
    pub entities: Vec<EntityView>,
    pub retrieved_triplets: Vec<Triplet>,
    pub retrieved_paths: Vec<KgPath>,
    pub claims: Vec<ScoredClaim>,
    pub n: usize,
    pub kas: f64,
    pub sum_term: f64,
    pub config: ConfigEcho,
    pub diagnostics: Vec<String>,
}

impl VerificationReport {
    pub fn retrieved(&self) -> RetrievedTriplets {
        RetrievedTriplets { paths: self.retrieved_paths.clone(), triplets: self.retrieved_triplets.clone() }
    }

    /// KAS recomputed from the stored claim scores and config.
    pub fn recomputed_kas(&self) -> f64 {
        kg_attribution_score(&self.claims, &self.config.scoring).kas
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Json,
    Ansi,
    Html,
}

impl std::str::FromStr for RenderFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "ansi" => Ok(Self::Ansi),
            "html" => Ok(Self::Html),
            other => Err(format!("unknown format `{other}` (expected json, ansi or html)")),
        }
    }
}

pub fn render(report: &VerificationReport, format: RenderFormat) -> String {
    match format {
        RenderFormat::Json => render_json(report),
        RenderFormat::Ansi => render_ansi(report),
        RenderFormat::Html => render_html(report),
    }
}

pub fn render_json(report: &VerificationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// A run of input text and the claim (by position) whose color it takes.
#[derive(Debug, PartialEq, Eq)]
struct Segment {
    start: usize,
    end: usize,
    claim: Option<usize>,
    covered_by: usize,
}

fn segments(report: &VerificationReport) -> Vec<Segment> {
    let len = report.input_text.chars().count();
    let ranges: Vec<(usize, (usize, usize))> = report
        .claims
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.claim.range().map(|r| (i, r)))
        .filter(|(_, (s, e))| s < e && *e <= len)
        .collect();
    let mut cuts: Vec<usize> = vec![0, len];
    for (_, (s, e)) in &ranges {
        cuts.push(*s);
        cuts.push(*e);
    }
    cuts.sort_unstable();
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            let covering: Vec<usize> =
                ranges.iter().filter(|(_, (s, e))| *s <= w[0] && w[1] <= *e).map(|(i, _)| *i).collect();
            Segment { start: w[0], end: w[1], claim: covering.last().copied(), covered_by: covering.len() }
        })
        .collect()
}

fn overlap_notes(report: &VerificationReport) -> Vec<String> {
    let mut notes = Vec::new();
    for (i, a) in report.claims.iter().enumerate() {
        for (j, b) in report.claims.iter().enumerate().skip(i + 1) {
            if let (Some((as_, ae)), Some((bs, be))) = (a.claim.range(), b.claim.range()) {
                if as_ < be && bs < ae {
                    notes.push(format!(
                        "claim {} overlaps claim {}; the shared text is shown in claim {}'s color",
                        j + 1,
                        i + 1,
                        j + 1
                    ));
                }
            }
        }
    }
    notes
}

const RESET: &str = "\x1b[0m";

pub fn ansi_color(label: PredictionLabel) -> &'static str {
    match label {
        PredictionLabel::Attributable => "\x1b[32m",
        PredictionLabel::Extrapolatory => "\x1b[33m",
        PredictionLabel::Contradictory => "\x1b[31m",
        PredictionLabel::NoAttribution => "\x1b[90m",
    }
}

fn html_color(label: PredictionLabel) -> &'static str {
    match label {
        PredictionLabel::Attributable => "#c8f7c5",
        PredictionLabel::Extrapolatory => "#ffe0a3",
        PredictionLabel::Contradictory => "#ffb3b3",
        PredictionLabel::NoAttribution => "#dddddd",
    }
}

fn slice(chars: &[char], s: usize, e: usize) -> String {
    chars[s..e].iter().collect()
}

pub fn render_ansi(report: &VerificationReport) -> String {
    let chars: Vec<char> = report.input_text.chars().collect();
    let mut out = String::new();
    for seg in segments(report) {
        let text = slice(&chars, seg.start, seg.end);
        match seg.claim {
            Some(i) => {
                let underline = if seg.covered_by > 1 { "\x1b[4m" } else { "" };
                let _ = write!(out, "{}{underline}{text}{RESET}", ansi_color(report.claims[i].claim.prediction));
            }
            None => out.push_str(&text),
        }
    }
    out.push_str("\n\n");

    for (i, c) in report.claims.iter().enumerate() {
        let color = ansi_color(c.claim.prediction);
        let _ = writeln!(
            out,
            "{color}[{}] {}{RESET}  cs={} tms={:.3} ss={:.3} epr={:.3}",
            i + 1,
            c.claim.prediction,
            c.claim_score.value(),
            c.tms,
            c.ss,
            c.epr
        );
        let _ = writeln!(out, "    span: \"{}\"", c.claim.span);
        let _ = writeln!(out, "    rationale: {}", c.claim.rationale);
        for t in &c.claim.rel_triplets {
            let _ = writeln!(out, "    evidence: {}", t.render());
        }
        for d in &c.claim.diagnostics {
            let _ = writeln!(out, "    note: {d}");
        }
    }
    if !report.entities.is_empty() {
        out.push_str("\nEntities\n");
        for e in &report.entities {
            let desc = if e.description.is_empty() { String::new() } else { format!(" - {}", e.description) };
            let _ = writeln!(out, "  [{} ({})]{desc}", e.label, e.entity.node);
        }
    }
    for note in overlap_notes(report) {
        let _ = writeln!(out, "note: {note}");
    }
    for d in &report.diagnostics {
        let _ = writeln!(out, "diagnostic: {d}");
    }
    let _ = writeln!(out, "\nKAS: {:.6} (sum {:.6}, n={})", report.kas, report.sum_term, report.n);
    out
}

fn esc(s: &str) -> String {
    html_escape::encode_text(s).into_owned()
}

fn attr(s: &str) -> String {
    html_escape::encode_double_quoted_attribute(s).into_owned()
}

pub fn render_html(report: &VerificationReport) -> String {
    let chars: Vec<char> = report.input_text.chars().collect();
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Claim verification report</title>\n<style>\n");
    out.push_str("body{font-family:sans-serif;max-width:60em;margin:2em auto}\n");
    out.push_str(".text{line-height:1.8;white-space:pre-wrap}\n.overlap{text-decoration:underline}\n");
    out.push_str(".entity{display:inline-block;border:1px solid #888;padding:.2em .5em;margin:.2em}\n");
    out.push_str("</style>\n</head>\n<body>\n<div class=\"text\">");
    for seg in segments(report) {
        let text = esc(&slice(&chars, seg.start, seg.end));
        match seg.claim {
            Some(i) => {
                let c = &report.claims[i];
                let class = if seg.covered_by > 1 { " overlap" } else { "" };
                let _ = write!(
                    out,
                    "<mark class=\"claim {}{class}\" data-claim=\"{}\" style=\"background:{}\" title=\"{}\">{text}</mark>",
                    c.claim.prediction.as_str().to_lowercase(),
                    i + 1,
                    html_color(c.claim.prediction),
                    attr(&c.claim.rationale)
                );
            }
            None => out.push_str(&text),
        }
    }
    out.push_str("</div>\n<ol class=\"claims\">\n");
    for c in &report.claims {
        let _ = writeln!(
            out,
            "<li><span style=\"background:{}\">{}</span> cs={} TMS={:.3}<br>“{}”<br><em>{}</em>",
            html_color(c.claim.prediction),
            c.claim.prediction,
            c.claim_score.value(),
            c.tms,
            esc(&c.claim.span),
            esc(&c.claim.rationale)
        );
        if !c.claim.rel_triplets.is_empty() {
            out.push_str("<ul>");
            for t in &c.claim.rel_triplets {
                let _ = write!(out, "<li>{}</li>", esc(&t.render()));
            }
            out.push_str("</ul>");
        }
        for d in &c.claim.diagnostics {
            let _ = write!(out, "<div class=\"note\">{}</div>", esc(d));
        }
        out.push_str("</li>\n");
    }
    out.push_str("</ol>\n<div class=\"entities\">\n");
    for e in &report.entities {
        let _ = writeln!(
            out,
            "<div class=\"entity\"><strong>{}</strong> <code>{}</code><br><small>{}</small></div>",
            esc(&e.label),
            esc(e.entity.node.as_str()),
            esc(&e.description)
        );
    }
    out.push_str("</div>\n");
    for note in overlap_notes(report) {
        let _ = writeln!(out, "<p class=\"note\">{}</p>", esc(&note));
    }
    for d in &report.diagnostics {
        let _ = writeln!(out, "<p class=\"diagnostic\">{}</p>", esc(d));
    }
    let _ = writeln!(out, "<p class=\"kas\">KAS: {:.6} (n={})</p>\n</body>\n</html>", report.kas, report.n);
    out
}

/// Removes ANSI SGR sequences.
pub fn strip_ansi(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\x1b' && chars.peek() == Some(&'[') {
            for d in chars.by_ref() {
                if d.is_ascii_alphabetic() {
                    break;
                }
            }
            continue;
        }
        out.push(c);
    }
    out
}
