//! Text embedders for the semantic-similarity term: an offline hashed
//! bag-of-tokens embedder and a client for `/embeddings` endpoints.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{BackendConfig, BackendError, JsonClient};
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed embedding response: {0}")]
    Malformed(String),
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Case-folded alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    normalize(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Count vector over `dim` buckets; a token's bucket is the 64-bit FNV-1a
/// hash of its UTF-8 bytes modulo `dim`.
#[derive(Debug, Clone, Copy)]
pub struct HashedBagEmbedder {
    pub dim: usize,
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        Self { dim: 1024 }
    }
}

impl HashedBagEmbedder {
    pub fn bucket(&self, token: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write(token.as_bytes());
        (h.finish() % self.dim as u64) as usize
    }
}

impl Embedder for HashedBagEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        for t in tokens(text) {
            v[self.bucket(&t)] += 1.0;
        }
        Ok(v)
    }
}

/// Client for `POST {base_url}/embeddings`.
pub struct HttpEmbedder {
    cfg: BackendConfig,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        let client = JsonClient::new(&cfg)?;
        Ok(Self { cfg, client })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = json!({"model": self.cfg.model, "input": [text]});
        let resp = self.client.post(&self.cfg.endpoint("embeddings"), &body)?;
        resp.pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Malformed("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| EmbedError::Malformed("non-numeric embedding entry".into())))
            .collect()
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_bucket_is_stable() {
        // FNV-1a 64 of "moon" computed independently: offset basis
        // 0xcbf29ce484222325, prime 0x100000001b3.
        let mut h: u64 = 0xcbf29ce484222325;
        for b in b"moon" {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        assert_eq!(HashedBagEmbedder::default().bucket("moon"), (h % 1024) as usize);
    }

    #[test]
    fn tokens_fold_case_and_drop_punctuation() {
        assert_eq!(tokens("Apollo 11, crew-member; NEIL"), ["apollo", "11", "crew", "member", "neil"]);
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(EmbedError::DimensionMismatch(1, 2))));
    }

    #[test]
    fn http_embedder_reads_first_vector() {
        let mut server = mockito::Server::new();
        let m = server
            .mock("POST", "/embeddings")
            .match_body(mockito::Matcher::Json(json!({"model": "emb", "input": ["hello"]})))
            .with_status(200)
            .with_body(json!({"data": [{"embedding": [0.5, 0.25]}]}).to_string())
            .create();
        let mut cfg = BackendConfig::new(server.url(), "emb");
        cfg.max_retries = 0;
        let e = HttpEmbedder::new(cfg).unwrap();
        assert_eq!(e.embed("hello").unwrap(), [0.5, 0.25]);
        m.assert();
    }
}
