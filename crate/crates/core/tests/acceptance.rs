//! Acceptance checks, one line per criterion. Run with
//! `cargo test --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use claimver::backend::{BackendConfig, HttpBackend};
use claimver::embed::HashedBagEmbedder;
use claimver::exec::Execution;
use claimver::kg::{KnowledgeGraph, NodeId, Triplet};
use claimver::linker::link_entities;
use claimver::parser::{parse_response, render_response, RawClaim};
use claimver::pipeline::{run_pipeline, PipelineOptions};
use claimver::report::{render_json, VerificationReport};
use claimver::retrieval::{enumerate_paths_oracle, retrieve, retrieve_with, KgPath, RetrievalConfig};
use claimver::scoring::{
    claim_score, kg_attribution_score, modified_sigmoid, triplets_match_score, ScoredClaim, ScoringConfig,
};
use claimver::validate::{validate_claims, ClaimResult, PredictionLabel};

use common::*;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn ensure(ok: bool, detail: impl Into<String>) -> Verdict {
    if ok {
        Verdict::Pass(detail.into())
    } else {
        Verdict::Fail(detail.into())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- scoring

const LABELS: [PredictionLabel; 4] = [
    PredictionLabel::Attributable,
    PredictionLabel::Extrapolatory,
    PredictionLabel::Contradictory,
    PredictionLabel::NoAttribution,
];

fn ac1_claim_scores() -> Verdict {
    let cases = [
        (PredictionLabel::Attributable, 1, 2),
        (PredictionLabel::Extrapolatory, 2, 1),
        (PredictionLabel::Extrapolatory, 0, 0),
        (PredictionLabel::NoAttribution, 0, 0),
        (PredictionLabel::Contradictory, 3, -1),
    ];
    let bad: Vec<_> =
        cases.iter().filter(|(l, n, want)| claim_score(*l, *n).value() != *want).map(|(l, n, _)| format!("{l}/{n}")).collect();
    ensure(bad.is_empty(), format!("5 cases, mismatches: {bad:?}"))
}

fn ac2_sigmoid_values() -> Verdict {
    // 1/(1+e^-2) and 1/(1+e^3) evaluated to 40 digits with arbitrary
    // precision arithmetic.
    const SIG_POS2: f64 = 0.880_797_077_977_882_444_059_729_141_302_396_795_206_4;
    const SIG_NEG1_G3: f64 = 0.047_425_873_177_566_780_878_848_151_771_752_201_386_18;
    let cfg = ScoringConfig::default();
    let zero = modified_sigmoid(0.0, &cfg);
    let p = modified_sigmoid(2.0, &cfg);
    let n = modified_sigmoid(-1.0, &cfg);
    ensure(
        zero == 0.5 && close(p, SIG_POS2, 1e-12) && close(n, SIG_NEG1_G3, 1e-12),
        format!("s(0)={zero}, s(2)={p:.15}, s(-1)={n:.15}"),
    )
}

fn random_scored(rng: &mut StdRng, cfg: &ScoringConfig) -> ScoredClaim {
    let label = *LABELS.choose(rng).unwrap();
    let n = rng.gen_range(0..4usize);
    let ss: f64 = rng.gen();
    let epr = [0.0, 1.0, rng.gen::<f64>()][rng.gen_range(0..3)];
    let tms = triplets_match_score(cfg, ss, epr, n);
    ScoredClaim {
        claim: ClaimResult {
            span: String::new(),
            start: None,
            end: None,
            prediction: label,
            rel_triplets: (0..n).map(placeholder).collect(),
            rationale: String::new(),
            diagnostics: vec![],
        },
        ss,
        epr,
        tms,
        claim_score: claim_score(label, n),
    }
}

fn placeholder(k: usize) -> Triplet {
    Triplet {
        subject: NodeId::new("a").unwrap(),
        subject_label: "a".into(),
        predicate: format!("p{k}"),
        object: NodeId::new("b").unwrap(),
        object_label: "b".into(),
    }
}

/// Direct evaluation from (label, triplet count, ss, epr) tuples.
fn direct_kas(items: &[(PredictionLabel, usize, f64, f64)], alpha: f64, beta: f64, gneg: f64, gpos: f64) -> f64 {
    let mut sum = 0.0;
    for &(label, n, ss, epr) in items {
        let cs = match (label, n) {
            (PredictionLabel::Attributable, _) => 2.0,
            (PredictionLabel::Extrapolatory, 0) => 0.0,
            (PredictionLabel::Extrapolatory, _) => 1.0,
            (PredictionLabel::NoAttribution, _) => 0.0,
            (PredictionLabel::Contradictory, _) => -1.0,
        };
        let tms = if n == 0 { 0.0 } else { alpha * ss + beta * epr };
        sum += tms * cs;
    }
    logistic(sum, gneg, gpos)
}

fn ac3_oracle_equivalence() -> Verdict {
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cfg = ScoringConfig {
            alpha: rng.gen_range(0.0..1.0),
            beta: rng.gen_range(0.0..1.0),
            gamma_neg: rng.gen_range(1.0..5.0),
            gamma_pos: rng.gen_range(0.5..2.0),
        };
        let claims: Vec<ScoredClaim> = (0..rng.gen_range(0..8)).map(|_| random_scored(&mut rng, &cfg)).collect();
        let items: Vec<_> =
            claims.iter().map(|c| (c.claim.prediction, c.claim.rel_triplets.len(), c.ss, c.epr)).collect();
        let got = kg_attribution_score(&claims, &cfg).kas;
        let want = direct_kas(&items, cfg.alpha, cfg.beta, cfg.gamma_neg, cfg.gamma_pos);
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-12, format!("1000 sets, max |diff| = {worst:.2e}"))
}

fn ac4_monotone_and_asymmetric() -> Verdict {
    let mut rng = StdRng::seed_from_u64(4);
    let cfg = ScoringConfig::default();
    let mut violations = 0;
    for case in 0..1000 {
        let mut claims: Vec<ScoredClaim> = (0..rng.gen_range(0..5)).map(|_| random_scored(&mut rng, &cfg)).collect();
        let before = kg_attribution_score(&claims, &cfg).kas;
        let mut extra = random_scored(&mut rng, &cfg);
        // Keep the appended term away from zero unless testing zero.
        let sign = case % 3;
        let (label, n) = match sign {
            0 => (PredictionLabel::Attributable, 1),
            1 => (PredictionLabel::Contradictory, 1),
            _ => (PredictionLabel::NoAttribution, 0),
        };
        extra.claim.prediction = label;
        extra.claim.rel_triplets.truncate(n);
        while extra.claim.rel_triplets.len() < n {
            extra.claim.rel_triplets.push(placeholder(0));
        }
        extra.claim_score = claim_score(label, n);
        extra.tms = if n == 0 { 0.0 } else { rng.gen_range(0.01..1.0) };
        claims.push(extra);
        let after = kg_attribution_score(&claims, &cfg).kas;
        let ok = match sign {
            0 => after > before,
            1 => after < before,
            _ => after == before,
        };
        if !ok || !(after > 0.0 && after < 1.0) {
            violations += 1;
        }
    }
    for _ in 0..1000 {
        let x: f64 = rng.gen_range(1e-4..20.0);
        if modified_sigmoid(-x, &cfg) >= 1.0 - modified_sigmoid(x, &cfg) {
            violations += 1;
        }
    }
    ensure(violations == 0, format!("2000 cases, {violations} violation(s)"))
}

// -------------------------------------------------------------- retrieval

fn random_graph(rng: &mut StdRng) -> KnowledgeGraph {
    let n = rng.gen_range(2..=50);
    let m = rng.gen_range(0..=150);
    let mut b = KnowledgeGraph::builder();
    for i in 0..n {
        b.node(&format!("n{i}"), &format!("node {i}"));
    }
    for _ in 0..m {
        let s = rng.gen_range(0..n);
        let o = rng.gen_range(0..n);
        let p = ["p", "q", "r"][rng.gen_range(0..3)];
        // Duplicates are rejected by the builder; parallel edges with other
        // predicates and self-loops are kept.
        let _ = b.add_triplet(&format!("n{s}"), p, &format!("n{o}"));
    }
    b.build()
}

fn ac5_retrieval_vs_oracle() -> Verdict {
    let mut rng = StdRng::seed_from_u64(5);
    let cfg = RetrievalConfig { max_hops: 3, max_paths_per_pair: 4 };
    let mut pairs_checked = 0;
    let mut mismatches = Vec::new();
    for g in 0..200 {
        let kg = random_graph(&mut rng);
        let ids: Vec<NodeId> = kg.nodes().map(|n| n.id.clone()).collect();
        let k = rng.gen_range(0..=5.min(ids.len()));
        let seeds: Vec<NodeId> = ids.choose_multiple(&mut rng, k).cloned().collect();
        let exec = if g % 2 == 0 { Execution::Sequential } else { Execution::Parallel };
        let got = retrieve_with(&kg, &seeds, &cfg, exec).unwrap();
        let mut by_pair: BTreeMap<(NodeId, NodeId), Vec<KgPath>> = BTreeMap::new();
        for p in got.paths {
            by_pair.entry(p.endpoints.clone()).or_default().push(p);
        }
        let mut sorted = seeds.clone();
        sorted.sort();
        for i in 0..sorted.len() {
            for j in i + 1..sorted.len() {
                let mut want = enumerate_paths_oracle(&kg, &sorted[i], &sorted[j], 3).unwrap();
                want.truncate(4);
                let have = by_pair.remove(&(sorted[i].clone(), sorted[j].clone())).unwrap_or_default();
                pairs_checked += 1;
                if have != want {
                    mismatches.push(format!("graph {g} pair {}-{}", sorted[i], sorted[j]));
                }
            }
        }
        if !by_pair.is_empty() {
            mismatches.push(format!("graph {g}: paths for unexpected pairs"));
        }
    }
    ensure(
        mismatches.is_empty(),
        format!("200 graphs, {pairs_checked} pairs, {} mismatch(es) {:?}", mismatches.len(), mismatches.iter().take(3).collect::<Vec<_>>()),
    )
}

// ----------------------------------------------------------------- parser

const NASTY: &[&str] = &[
    "plain", "\"quoted\"", "back\\slash", "new\nline", "tab\there", "{brace}", "colon: yes", "comma, sep",
    "'single'", "\"text_span9\": \"fake\"", "ünïcødé", "日本語", "NA", "```", "[(a, b, c)]", "emoji 🚀",
];

fn nasty_string(rng: &mut StdRng) -> String {
    (0..rng.gen_range(1..4)).map(|_| *NASTY.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Word-aligned spans of the fixture text.
fn random_span(rng: &mut StdRng, words: &[&str]) -> String {
    let a = rng.gen_range(0..words.len());
    let b = rng.gen_range(a + 1..=words.len().min(a + 8));
    words[a..b].join(" ")
}

fn random_claims(rng: &mut StdRng, words: &[&str], triplets: &[String]) -> Vec<RawClaim> {
    (1..=rng.gen_range(1..5u32))
        .map(|index| RawClaim {
            index,
            text_span: random_span(rng, words),
            prediction: ["Attributable", "Extrapolatory", "Contradictory"][rng.gen_range(0..3)].to_string(),
            triplets: if rng.gen_bool(0.3) {
                "NA".to_string()
            } else {
                let k = rng.gen_range(1..3);
                triplets.choose_multiple(rng, k).cloned().collect::<Vec<_>>().join("\n")
            },
            rationale: nasty_string(rng),
        })
        .collect()
}

/// Key/value lines of a response, values JSON-encoded.
fn response_lines(claims: &[RawClaim]) -> Vec<(String, String)> {
    let q = |s: &str| serde_json::to_string(s).unwrap();
    claims
        .iter()
        .flat_map(|c| {
            let i = c.index;
            [
                (format!("text_span{i}"), q(&c.text_span)),
                (format!("prediction{i}"), q(&c.prediction)),
                (format!("triplets{i}"), q(&c.triplets)),
                (format!("rationale{i}"), q(&c.rationale)),
            ]
        })
        .collect()
}

fn assemble(lines: &[(String, String)]) -> String {
    let body: Vec<String> = lines.iter().map(|(k, v)| format!("  \"{k}\": {v}")).collect();
    format!("{{\n{}\n}}", body.join(",\n"))
}

#[derive(Clone, Copy, Debug)]
enum Corruption {
    MissingKey,
    Reordered,
    NaValue,
    RewrittenSpan,
}

fn corrupt(rng: &mut StdRng, claims: &mut [RawClaim], kind: Corruption) -> String {
    let k = rng.gen_range(0..claims.len());
    match kind {
        Corruption::NaValue => {
            if rng.gen_bool(0.5) {
                claims[k].prediction = "NA".into();
            } else {
                claims[k].prediction = "Attributable".into();
                claims[k].triplets = "NA".into();
            }
            assemble(&response_lines(claims))
        }
        Corruption::RewrittenSpan => {
            let span = &claims[k].text_span;
            claims[k].text_span = if rng.gen_bool(0.5) && span.chars().any(|c| c.is_lowercase()) {
                span.to_uppercase()
            } else {
                format!("{span} xyzzy")
            };
            assemble(&response_lines(claims))
        }
        Corruption::MissingKey => {
            let mut lines = response_lines(claims);
            lines.remove(k * 4 + rng.gen_range(0..4));
            assemble(&lines)
        }
        Corruption::Reordered => {
            let mut lines = response_lines(claims);
            if claims.len() > 1 && rng.gen_bool(0.5) {
                // Swap whole groups.
                let j = (k + 1) % claims.len();
                let (a, b) = (k.min(j), k.max(j));
                let group_b: Vec<_> = lines.drain(b * 4..b * 4 + 4).collect();
                let group_a: Vec<_> = lines.drain(a * 4..a * 4 + 4).collect();
                lines.splice(a * 4..a * 4, group_b);
                lines.splice(b * 4..b * 4, group_a);
            } else {
                let i = rng.gen_range(0..3);
                lines.swap(k * 4 + i, k * 4 + i + 1);
            }
            assemble(&lines)
        }
    }
}

fn ac6_parser_robustness() -> Verdict {
    let mut rng = StdRng::seed_from_u64(6);
    let kg = moon_kg();
    let text = moon_text();
    let words: Vec<&str> = text.split(' ').map(|w| w.trim_end_matches('.')).collect();
    let seeds: Vec<_> = link_entities(&kg, &text).into_iter().map(|e| e.node).collect();
    let retrieved = retrieve(&kg, &seeds, &RetrievalConfig::default()).unwrap();
    let triplet_texts: Vec<String> = retrieved.triplets.iter().map(Triplet::render).collect();

    let mut failures = Vec::new();
    for i in 0..500 {
        let claims = random_claims(&mut rng, &words, &triplet_texts);
        let raw = assemble(&response_lines(&claims));
        let outcome = catch_unwind(|| {
            let parsed = parse_response(&raw).map_err(|e| format!("{e}"))?;
            if parsed.claims != claims || !parsed.diagnostics.is_empty() {
                return Err("well-formed response not read back exactly".to_string());
            }
            let again = parse_response(&render_response(&parsed.claims)).map_err(|e| format!("{e}"))?;
            if again.claims != parsed.claims {
                return Err("render/parse round trip changed claims".to_string());
            }
            Ok(())
        });
        match outcome {
            Ok(Ok(())) => {}
            Ok(Err(e)) => failures.push(format!("well-formed {i}: {e}")),
            Err(_) => failures.push(format!("well-formed {i}: panic")),
        }
    }

    let kinds = [Corruption::MissingKey, Corruption::Reordered, Corruption::NaValue, Corruption::RewrittenSpan];
    for i in 0..500 {
        let mut claims = random_claims(&mut rng, &words, &triplet_texts);
        let kind = kinds[i % 4];
        let raw = corrupt(&mut rng, &mut claims, kind);
        // Structural damage must be caught by the parser; content damage by
        // validation against the fixture text and graph.
        let outcome = catch_unwind(AssertUnwindSafe(|| match parse_response(&raw) {
            Err(e) => (e.diagnostics.len(), 0),
            Ok(parsed) => {
                let validated = validate_claims(&parsed.claims, &text, &retrieved, &kg);
                (parsed.diagnostics.len(), validated.iter().map(|c| c.diagnostics.len()).sum::<usize>())
            }
        }));
        match (outcome, kind) {
            (Err(_), _) => failures.push(format!("corrupted {i} ({kind:?}): panic")),
            (Ok((0, _)), Corruption::MissingKey | Corruption::Reordered) => {
                failures.push(format!("corrupted {i} ({kind:?}): no parser diagnostic"))
            }
            (Ok((_, 0)), Corruption::NaValue | Corruption::RewrittenSpan) => {
                failures.push(format!("corrupted {i} ({kind:?}): no validation diagnostic"))
            }
            _ => {}
        }
    }
    ensure(
        failures.is_empty(),
        format!("1000 responses, {} failure(s) {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    )
}

// ------------------------------------------------------------ end to end

const SINGLE_ATTRIBUTABLE: &str = r#"{
"text_span1": "Neil Armstrong was the first person to walk on the Moon during the Apollo 11 mission",
"prediction1": "Attributable",
"triplets1": "(Apollo 11, crew member, Neil Armstrong)",
"rationale1": "Listed as crew."
}"#;

fn pipeline(response: &'static str, exec: Execution) -> VerificationReport {
    let opts = PipelineOptions { exec, ..Default::default() };
    run_pipeline(&moon_kg(), &moon_text(), &fixed(response), &HashedBagEmbedder::default(), &[], &opts).unwrap()
}

fn ac7_determinism() -> Verdict {
    let a = render_json(&pipeline(MOON_RESPONSE, Execution::Parallel));
    let b = render_json(&pipeline(MOON_RESPONSE, Execution::Parallel));
    let c = render_json(&pipeline(MOON_RESPONSE, Execution::Sequential));
    let single = pipeline(SINGLE_ATTRIBUTABLE, Execution::default());
    let t = single.claims[0].tms;
    let exact = single.kas == modified_sigmoid(2.0 * t, &ScoringConfig::default());
    let independent = close(single.kas, logistic(2.0 * t, 3.0, 1.0), 1e-12);
    ensure(
        a == b && a == c && exact && independent && t > 0.0,
        format!("identical={}, tms={t:.6}, kas={:.12}", a == b && a == c, single.kas),
    )
}

fn ac8_downgrade() -> Verdict {
    const ABSENT: &str = r#"{
"text_span1": "The Moon landing was staged by NASA",
"prediction1": "Attributable",
"triplets1": "(Neil Armstrong, founded, NASA)",
"rationale1": "-"
}"#;
    let r = pipeline(ABSENT, Execution::default());
    let c = &r.claims[0];
    ensure(
        c.claim.prediction == PredictionLabel::NoAttribution
            && c.claim.rel_triplets.is_empty()
            && c.contribution() == 0.0
            && r.sum_term == 0.0
            && r.kas == 0.5,
        format!("prediction={}, contribution={}, kas={}", c.claim.prediction, c.contribution(), r.kas),
    )
}

fn ac9_live() -> Verdict {
    let Ok(url) = std::env::var("CLAIMVER_LIVE_URL") else {
        return Verdict::Skip("set CLAIMVER_LIVE_URL (and CLAIMVER_LIVE_MODEL) to run".into());
    };
    let model = std::env::var("CLAIMVER_LIVE_MODEL").unwrap_or_else(|_| "default".into());
    let backend = match HttpBackend::new(BackendConfig::from_env(url, model)) {
        Ok(b) => b,
        Err(e) => return Verdict::Skip(format!("backend config: {e}")),
    };
    match run_pipeline(&moon_kg(), &moon_text(), &backend, &HashedBagEmbedder::default(), &[], &PipelineOptions::default()) {
        Ok(r) => {
            let contradictory: Vec<_> =
                r.claims.iter().filter(|c| c.claim.prediction == PredictionLabel::Contradictory).collect();
            let with_evidence = contradictory.iter().filter(|c| !c.claim.rel_triplets.is_empty()).count();
            Verdict::Skip(format!(
                "recorded only: {} claims, {} contradictory ({} with triplets), kas={:.4}",
                r.n,
                contradictory.len(),
                with_evidence,
                r.kas
            ))
        }
        Err(e) => Verdict::Skip(format!("recorded only: {e}")),
    }
}

fn main() -> ExitCode {
    let checks: [(&str, &str, Check, Duration); 9] = [
        ("AC1", "claim score mapping", ac1_claim_scores, Duration::from_secs(1)),
        ("AC2", "modified sigmoid values", ac2_sigmoid_values, Duration::from_secs(1)),
        ("AC3", "KAS equals direct evaluation", ac3_oracle_equivalence, Duration::from_secs(5)),
        ("AC4", "KAS monotonicity and asymmetry", ac4_monotone_and_asymmetric, Duration::from_secs(60)),
        ("AC5", "retrieval matches exhaustive oracle", ac5_retrieval_vs_oracle, Duration::from_secs(60)),
        ("AC6", "parser robustness", ac6_parser_robustness, Duration::from_secs(60)),
        ("AC7", "end-to-end determinism", ac7_determinism, Duration::from_secs(60)),
        ("AC8", "absent triplet downgraded", ac8_downgrade, Duration::from_secs(60)),
        ("AC9", "live endpoint (optional)", ac9_live, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (id, name, check, limit) in checks {
        let start = Instant::now();
        let verdict = catch_unwind(check).unwrap_or_else(|_| Verdict::Fail("panicked".into()));
        let elapsed = start.elapsed();
        let verdict = match verdict {
            Verdict::Pass(d) if elapsed > limit => Verdict::Fail(format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            v => v,
        };
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {id} {name}: {detail} ({elapsed:.2?})");
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
