//! Chat-completion backends: a blocking HTTP client for any
//! `/chat/completions`-style endpoint and a canned-response mock keyed by
//! prompt hash.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::prompt::PromptBundle;

pub const API_KEY_ENV: &str = "CLAIMVER_API_KEY";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication rejected by endpoint (HTTP {status})")]
    Auth { status: u16 },
    #[error("endpoint rejected request (HTTP {status}): {body}")]
    Client { status: u16, body: String },
    #[error("endpoint failing after {attempts} attempt(s): HTTP {status}")]
    Server { status: u16, attempts: u32 },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("no canned response for prompt {0}")]
    UnknownPrompt(String),
    #[error("cannot read canned responses from {path}: {message}")]
    Fixture { path: String, message: String },
}

#[derive(Clone)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_base: Duration,
    /// Maximum in-flight requests per client.
    pub concurrency: usize,
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("temperature", &self.temperature)
            .field("backoff_base", &self.backoff_base)
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

impl BackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            temperature: 0.0,
            backoff_base: Duration::from_millis(500),
            concurrency: 4,
        }
    }

    /// Like [`new`](Self::new), with the bearer token taken from
    /// `CLAIMVER_API_KEY` when set.
    pub fn from_env(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        let mut cfg = Self::new(base_url, model);
        cfg.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        cfg
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout.is_zero() {
            return Err(BackendError::InvalidConfig("timeout must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.concurrency == 0 {
            return Err(BackendError::InvalidConfig("concurrency must be at least 1".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(BackendError::InvalidConfig(format!("base url `{}` is not http(s)", self.base_url)));
        }
        Ok(())
    }

    pub(crate) fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, BackendError>;
}

/// Counting semaphore bounding in-flight requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking JSON client shared by the completion and embedding backends.
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    max_retries: u32,
    backoff_base: Duration,
    permits: Permits,
}

impl JsonClient {
    pub(crate) fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(Self {
            agent: ureq::AgentBuilder::new().timeout(cfg.timeout).build(),
            api_key: cfg.api_key.clone(),
            max_retries: cfg.max_retries,
            backoff_base: cfg.backoff_base,
            permits: Permits::new(cfg.concurrency),
        })
    }

    /// POSTs `body`, retrying 5xx/408/429 and transport failures with
    /// exponential backoff. Other 4xx fail immediately.
    pub(crate) fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.permits.acquire();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let mut req = self.agent.post(url).set("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            let err = match req.send_json(body) {
                Ok(resp) => {
                    return resp.into_json::<Value>().map_err(|e| BackendError::Malformed(e.to_string()));
                }
                Err(ureq::Error::Status(status, resp)) => match status {
                    401 | 403 => return Err(BackendError::Auth { status }),
                    408 | 429 | 500..=599 => BackendError::Server { status, attempts: attempt },
                    _ => {
                        let body = resp.into_string().unwrap_or_default();
                        return Err(BackendError::Client { status, body });
                    }
                },
                Err(ureq::Error::Transport(t)) => {
                    let message = t.to_string();
                    if message.contains("timed out") || message.contains("Timeout") {
                        BackendError::Timeout { attempts: attempt }
                    } else {
                        BackendError::Transport { message, attempts: attempt }
                    }
                }
            };
            if attempt > self.max_retries {
                return Err(err);
            }
            std::thread::sleep(self.backoff_base.saturating_mul(1 << (attempt - 1).min(16)));
        }
    }
}

/// Client for `POST {base_url}/chat/completions`.
pub struct HttpBackend {
    cfg: BackendConfig,
    client: JsonClient,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        let client = JsonClient::new(&cfg)?;
        Ok(Self { cfg, client })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    /// The JSON body sent for `prompt`: one user message.
    pub fn request_body(&self, prompt: &PromptBundle) -> Value {
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt.text()}],
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, BackendError> {
        let resp = self.client.post(&self.cfg.endpoint("chat/completions"), &self.request_body(prompt))?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}

/// Looks up a canned response by prompt hash.
pub fn mock_complete(table: &HashMap<String, String>, prompt: &PromptBundle) -> Result<String, BackendError> {
    let hash = prompt.hash();
    table.get(&hash).cloned().ok_or(BackendError::UnknownPrompt(hash))
}

/// Deterministic backend over a table of `prompt hash -> response`.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    table: HashMap<String, String>,
}

impl MockBackend {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self { table }
    }

    pub fn insert(&mut self, prompt: &PromptBundle, response: impl Into<String>) {
        self.table.insert(prompt.hash(), response.into());
    }

    /// Reads a JSON object mapping prompt hashes to responses.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let fixture_err = |message: String| BackendError::Fixture { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| fixture_err(e.to_string()))?;
        let table = serde_json::from_str(&text).map_err(|e| fixture_err(e.to_string()))?;
        Ok(Self { table })
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, BackendError> {
        mock_complete(&self.table, prompt)
    }
}
