//! End-to-end verification: preprocess, link, retrieve, prompt, complete,
//! parse, validate, score.

use std::fmt;

use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend};
use crate::embed::{EmbedError, Embedder};
use crate::exec::Execution;
use crate::kg::KnowledgeGraph;
use crate::linker::{chunk_text, preprocess, LinkedEntity, PreprocessError, TextChunk, TextHook};
use crate::parser::{parse_response, ParseError};
use crate::prompt::build_verification_prompt;
use crate::report::{ConfigEcho, EntityView, VerificationReport};
use crate::retrieval::{retrieve_with, RetrievalConfig, RetrievalError, RetrievedTriplets};
use crate::scoring::{kg_attribution_score, score_claims, ScoringConfig};
use crate::validate::{validate_claims, ClaimResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Preprocess,
    Retrieval,
    Backend,
    Parse,
    Scoring,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Preprocess => "preprocess",
            Stage::Retrieval => "triplet-retrieval",
            Stage::Backend => "llm-backend",
            Stage::Parse => "response-parser",
            Stage::Scoring => "scoring",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageFailure {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Scoring(#[from] EmbedError),
}

/// A failed run: the stage that failed, why, and whatever diagnostics were
/// collected before it.
#[derive(Debug, Error)]
#[error("{stage} stage failed: {failure}")]
pub struct PipelineError {
    pub stage: Stage,
    pub failure: StageFailure,
    pub diagnostics: Vec<String>,
}

impl PipelineError {
    fn new(stage: Stage, failure: impl Into<StageFailure>, diagnostics: Vec<String>) -> Self {
        Self { stage, failure: failure.into(), diagnostics }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineOptions {
    pub retrieval: RetrievalConfig,
    pub scoring: ScoringConfig,
    /// Character budget per prompt; `None` sends the whole text at once.
    pub chunk_chars: Option<usize>,
    pub exec: Execution,
}

struct ChunkOutcome {
    retrieved: RetrievedTriplets,
    claims: Vec<ClaimResult>,
    diagnostics: Vec<String>,
}

fn shift(mut claims: Vec<ClaimResult>, offset: usize) -> Vec<ClaimResult> {
    for c in &mut claims {
        c.start = c.start.map(|s| s + offset);
        c.end = c.end.map(|e| e + offset);
    }
    claims
}

fn run_chunk(
    kg: &KnowledgeGraph,
    chunk: &TextChunk,
    label: &str,
    entities: &[LinkedEntity],
    backend: &dyn CompletionBackend,
    opts: &PipelineOptions,
) -> Result<ChunkOutcome, (Stage, StageFailure, Vec<String>)> {
    let mut diagnostics = Vec::new();
    let len = chunk.text.chars().count();
    let seeds: Vec<_> = entities
        .iter()
        .filter(|e| e.start >= chunk.offset && e.end <= chunk.offset + len)
        .map(|e| e.node.clone())
        .collect();
    // Seeds are already deduplicated inside retrieval.
    let retrieved = retrieve_with(kg, &seeds, &opts.retrieval, Execution::Sequential)
        .map_err(|e| (Stage::Retrieval, e.into(), diagnostics.clone()))?;
    let prompt = build_verification_prompt(&chunk.text, &retrieved.triplets);
    let raw = backend.complete(&prompt).map_err(|e| (Stage::Backend, e.into(), diagnostics.clone()))?;
    let parsed = match parse_response(&raw) {
        Ok(p) => p,
        Err(e) => {
            diagnostics.extend(e.diagnostics.iter().map(|d| format!("{label}{d}")));
            return Err((Stage::Parse, e.into(), diagnostics));
        }
    };
    diagnostics.extend(parsed.diagnostics.iter().map(|d| format!("{label}{d}")));
    let claims = validate_claims(&parsed.claims, &chunk.text, &retrieved, kg);
    Ok(ChunkOutcome { retrieved, claims: shift(claims, chunk.offset), diagnostics })
}

pub fn run_pipeline(
    kg: &KnowledgeGraph,
    text: &str,
    backend: &dyn CompletionBackend,
    embedder: &dyn Embedder,
    hooks: &[&dyn TextHook],
    opts: &PipelineOptions,
) -> Result<VerificationReport, PipelineError> {
    let config_err = |m: String| PipelineError::new(Stage::Config, StageFailure::Config(m), Vec::new());
    if text.trim().is_empty() {
        return Err(config_err("input text is empty".into()));
    }
    opts.retrieval.validate().map_err(|e| config_err(e.to_string()))?;
    opts.scoring.validate().map_err(|e| config_err(e.to_string()))?;
    if opts.chunk_chars == Some(0) {
        return Err(config_err("chunk size must be at least 1".into()));
    }

    let mut diagnostics = Vec::new();
    let (text, entities) = preprocess(kg, text, hooks).map_err(|e| PipelineError::new(Stage::Preprocess, e, vec![]))?;
    if !hooks.is_empty() {
        diagnostics.push(format!("input rewritten by {} preprocessing hook(s); offsets refer to the rewritten text", hooks.len()));
    }
    for e in entities.iter().filter(|e| !e.alternates.is_empty()) {
        let alts: Vec<&str> = e.alternates.iter().map(|a| a.as_str()).collect();
        diagnostics.push(format!("ambiguous mention `{}` linked to {}; alternates: {}", e.mention, e.node, alts.join(", ")));
    }

    let chunks = match opts.chunk_chars {
        Some(budget) => chunk_text(&text, budget),
        None => vec![TextChunk { text: text.clone(), offset: 0, hard_split: false }],
    };
    let multi = chunks.len() > 1;
    for (k, c) in chunks.iter().enumerate() {
        if c.hard_split {
            diagnostics.push(format!("chunk {} cuts a sentence longer than the chunk budget", k + 1));
        }
    }
    if multi {
        for e in &entities {
            let inside = chunks.iter().any(|c| e.start >= c.offset && e.end <= c.offset + c.text.chars().count());
            if !inside {
                diagnostics.push(format!("mention `{}` spans a chunk boundary and is not used for retrieval", e.mention));
            }
        }
    }

    let outcomes = opts.exec.map_range(chunks.len(), |k| {
        let label = if multi { format!("chunk {}: ", k + 1) } else { String::new() };
        run_chunk(kg, &chunks[k], &label, &entities, backend, opts)
    });

    let mut retrieved_parts = Vec::new();
    let mut claims = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                diagnostics.extend(o.diagnostics);
                retrieved_parts.push(o.retrieved);
                claims.extend(o.claims);
            }
            Err((stage, failure, partial)) => {
                diagnostics.extend(partial);
                return Err(PipelineError::new(stage, failure, diagnostics));
            }
        }
    }
    let retrieved = RetrievedTriplets::merge(retrieved_parts);

    let scored = score_claims(claims, &entities, embedder, &opts.scoring, opts.exec)
        .map_err(|e| PipelineError::new(Stage::Scoring, e, diagnostics.clone()))?;
    let attribution = kg_attribution_score(&scored, &opts.scoring);

    let entity_views = entities
        .into_iter()
        .map(|e| {
            let node = kg.node(&e.node);
            EntityView {
                label: node.map(|n| n.label.clone()).unwrap_or_default(),
                description: node.map(|n| n.description.clone()).unwrap_or_default(),
                entity: e,
            }
        })
        .collect();

    Ok(VerificationReport {
        input_text: text,
        entities: entity_views,
        retrieved_triplets: retrieved.triplets,
        retrieved_paths: retrieved.paths,
        n: scored.len(),
        claims: scored,
        kas: attribution.kas,
        sum_term: attribution.sum_term,
        config: ConfigEcho { scoring: opts.scoring, retrieval: opts.retrieval, chunk_chars: opts.chunk_chars },
        diagnostics,
    })
}
