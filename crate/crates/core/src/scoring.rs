//! Claim scores, triplet match score (TMS) and the document-level KG
//! attribution score (KAS).
//!
//! ```text
//! cs   = 2 Attributable | 1 Extrapolatory with evidence | 0 Extrapolatory without
//!        evidence | 0 NoAttribution | -1 Contradictory
//! TMS  = alpha * SS + beta * EPR           (0 when a claim has no evidence)
//! KAS  = sigma_mod(sum_i TMS_i * cs_i)
//! sigma_mod(x) = 1 / (1 + exp(-gamma * x)), gamma = gamma_neg if x < 0 else gamma_pos
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine, EmbedError, Embedder};
use crate::exec::Execution;
use crate::kg::NodeId;
use crate::linker::LinkedEntity;
use crate::validate::{ClaimResult, PredictionLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_neg: f64,
    pub gamma_pos: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.5, gamma_neg: 3.0, gamma_pos: 1.0 }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid scoring config: {0}")]
pub struct ScoringConfigError(String);

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoringConfigError> {
        let finite = [self.alpha, self.beta, self.gamma_neg, self.gamma_pos].iter().all(|v| v.is_finite());
        if !finite {
            return Err(ScoringConfigError("all weights must be finite".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(ScoringConfigError("alpha and beta must be >= 0 with a positive sum".into()));
        }
        if !(self.gamma_neg >= self.gamma_pos && self.gamma_pos >= 0.0) {
            return Err(ScoringConfigError("need gamma_neg >= gamma_pos >= 0".into()));
        }
        Ok(())
    }
}

/// Per-claim validity score in `{-1, 0, 1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClaimScore(i8);

impl ClaimScore {
    pub fn value(self) -> i8 {
        self.0
    }
}

pub fn claim_score(label: PredictionLabel, n_triplets: usize) -> ClaimScore {
    ClaimScore(match label {
        PredictionLabel::Attributable => 2,
        PredictionLabel::Extrapolatory if n_triplets > 0 => 1,
        PredictionLabel::Extrapolatory => 0,
        PredictionLabel::NoAttribution => 0,
        PredictionLabel::Contradictory => -1,
    })
}

/// Share of the claim's entities that also appear in its evidence; 0 for a
/// claim without entities.
pub fn entity_presence_ratio(claim_entities: &BTreeSet<NodeId>, triplet_entities: &BTreeSet<NodeId>) -> f64 {
    if claim_entities.is_empty() {
        return 0.0;
    }
    claim_entities.intersection(triplet_entities).count() as f64 / claim_entities.len() as f64
}

/// Cosine similarity of the two embeddings, clamped to `[0, 1]`.
pub fn semantic_similarity(embedder: &dyn Embedder, claim_text: &str, triplets_text: &str) -> Result<f64, EmbedError> {
    let a = embedder.embed(claim_text)?;
    let b = embedder.embed(triplets_text)?;
    Ok(cosine(&a, &b)?.clamp(0.0, 1.0))
}

pub fn triplets_match_score(cfg: &ScoringConfig, ss: f64, epr: f64, n_triplets: usize) -> f64 {
    if n_triplets == 0 {
        return 0.0;
    }
    cfg.alpha * ss + cfg.beta * epr
}

/// Logistic curve with slope `gamma_neg` below zero and `gamma_pos` at or
/// above it. Evaluated so that `exp` never overflows.
pub fn modified_sigmoid(x: f64, cfg: &ScoringConfig) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-cfg.gamma_pos * x).exp())
    } else {
        let e = (cfg.gamma_neg * x).exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredClaim {
    #[serde(flatten)]
    pub claim: ClaimResult,
    pub ss: f64,
    pub epr: f64,
    pub tms: f64,
    pub claim_score: ClaimScore,
}

impl ScoredClaim {
    /// This claim's term in the KAS sum.
    pub fn contribution(&self) -> f64 {
        self.tms * f64::from(self.claim_score.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub sum_term: f64,
    pub kas: f64,
}

pub fn kg_attribution_score(claims: &[ScoredClaim], cfg: &ScoringConfig) -> AttributionResult {
    let sum_term: f64 = claims.iter().map(ScoredClaim::contribution).sum();
    AttributionResult { sum_term, kas: modified_sigmoid(sum_term, cfg) }
}

/// Evidence rendered for the similarity term: `(s, p, o)` joined by `"; "`.
pub fn triplets_text(claim: &ClaimResult) -> String {
    claim.rel_triplets.iter().map(|t| t.render()).collect::<Vec<_>>().join("; ")
}

/// Nodes of linked entities lying entirely inside the claim's span.
pub fn claim_entities(claim: &ClaimResult, entities: &[LinkedEntity]) -> BTreeSet<NodeId> {
    match claim.range() {
        Some((s, e)) => entities.iter().filter(|x| x.start >= s && x.end <= e).map(|x| x.node.clone()).collect(),
        None => BTreeSet::new(),
    }
}

pub fn triplet_entities(claim: &ClaimResult) -> BTreeSet<NodeId> {
    claim.rel_triplets.iter().flat_map(|t| [t.subject.clone(), t.object.clone()]).collect()
}

/// Scores one validated claim against the entities linked in its text.
pub fn score_claim(
    claim: ClaimResult,
    entities: &[LinkedEntity],
    embedder: &dyn Embedder,
    cfg: &ScoringConfig,
) -> Result<ScoredClaim, EmbedError> {
    let n = claim.rel_triplets.len();
    let (ss, epr) = if n == 0 {
        (0.0, 0.0)
    } else {
        let ss = semantic_similarity(embedder, &claim.span, &triplets_text(&claim))?;
        let epr = entity_presence_ratio(&claim_entities(&claim, entities), &triplet_entities(&claim));
        (ss, epr)
    };
    let tms = triplets_match_score(cfg, ss, epr, n);
    let cs = claim_score(claim.prediction, n);
    Ok(ScoredClaim { claim, ss, epr, tms, claim_score: cs })
}

pub fn score_claims(
    claims: Vec<ClaimResult>,
    entities: &[LinkedEntity],
    embedder: &dyn Embedder,
    cfg: &ScoringConfig,
    exec: Execution,
) -> Result<Vec<ScoredClaim>, EmbedError> {
    exec.map(&claims, |c| score_claim(c.clone(), entities, embedder, cfg)).into_iter().collect()
}
