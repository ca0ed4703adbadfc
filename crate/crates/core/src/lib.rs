//! Claim-level verification of text against a triplet knowledge graph.
//!
//! The pipeline links entity mentions to graph nodes, retrieves connecting
//! paths between them, asks a language model to split the text into claims
//! and label each one against the retrieved triplets, validates what the
//! model returned, and scores the result.

pub mod backend;
pub mod embed;
pub mod exec;
pub mod kg;
pub mod linker;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod retrieval;
pub mod scoring;
pub mod text;
pub mod validate;
