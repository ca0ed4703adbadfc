#![allow(dead_code)]

use std::path::PathBuf;

use claimver::backend::{BackendError, CompletionBackend};
use claimver::kg::{load_kg_with, KgFormat, KnowledgeGraph, LoadOptions};
use claimver::prompt::PromptBundle;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn moon_kg() -> KnowledgeGraph {
    let opts = LoadOptions { node_file: Some(fixture("moon_nodes.tsv")), lenient: false };
    load_kg_with(&fixture("moon.tsv"), KgFormat::Tsv, &opts).unwrap().0
}

pub fn moon_text() -> String {
    std::fs::read_to_string(fixture("moon.txt")).unwrap().trim_end().to_string()
}

pub const MOON_RESPONSE: &str = r#"{
"text_span1": "Neil Armstrong was the first person to walk on the Moon during the Apollo 11 mission",
"prediction1": "Attributable",
"triplets1": "(Apollo 11, crew member, Neil Armstrong)",
"rationale1": "Armstrong is listed as a crew member of Apollo 11.",
"text_span2": "The Moon landing was staged by NASA",
"prediction2": "Contradictory",
"triplets2": "(Apollo 11, operator, NASA)",
"rationale2": "NASA operated the Apollo 11 mission, which landed on the Moon."
}"#;

/// Answers every prompt with the output of a closure over its text.
pub struct ScriptedBackend<F>(pub F);

impl<F> CompletionBackend for ScriptedBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, prompt: &PromptBundle) -> Result<String, BackendError> {
        (self.0)(&prompt.rendered_input)
    }
}

pub fn fixed(response: &'static str) -> ScriptedBackend<impl Fn(&str) -> Result<String, BackendError> + Send + Sync> {
    ScriptedBackend(move |_: &str| Ok(response.to_string()))
}

/// 1/(1+e^(-g x)) with g chosen by the sign of x, written out directly.
pub fn logistic(x: f64, gamma_neg: f64, gamma_pos: f64) -> f64 {
    let g = if x < 0.0 { gamma_neg } else { gamma_pos };
    1.0 / (1.0 + (-g * x).exp())
}
