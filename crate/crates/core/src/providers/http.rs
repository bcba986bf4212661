//! HTTP backends: a chat-completions generator and JSON clients for the
//! embedding and scoring services.

use std::sync::Mutex;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    EmbeddingVector, Embedder, GenerationRequest, GenerationResult, OriginalityScore, OriginalityScorer,
    ProviderError, ScoreScale, TextGenerator,
};

/// Exponential backoff: attempt `n` (1-based) waits `base_delay * 2^(n-1)`
/// before attempt `n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn delay_after(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << (attempt - 1).min(16)))
    }
}

/// Environment variable holding the API key for `backend`:
/// `CPIG_<BACKEND>_API_KEY`, with non-alphanumerics mapped to `_`.
pub fn api_key_env_var(backend: &str) -> String {
    let name: String = backend
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("CPIG_{name}_API_KEY")
}

pub fn api_key_from_env(backend: &str) -> Option<String> {
    std::env::var(api_key_env_var(backend)).ok().filter(|k| !k.is_empty())
}

fn retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

#[derive(Debug)]
struct JsonClient {
    backend: String,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: Client,
}

impl JsonClient {
    fn new(backend: String, url: String, api_key: Option<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        let client = Client::builder().timeout(timeout).build().expect("reqwest client");
        JsonClient {
            backend,
            url,
            api_key,
            retry,
            client,
        }
    }

    /// POSTs `body`, retrying transport failures and retryable statuses.
    fn post<T: DeserializeOwned>(&self, body: &serde_json::Value) -> Result<(T, u32), ProviderError> {
        let attempts = self.retry.attempts.max(1);
        let mut last_detail = String::new();
        for attempt in 1..=attempts {
            let mut req = self.client.post(&self.url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    if resp.status().is_success() {
                        let text = resp.text().map_err(|e| ProviderError::MalformedResponse {
                            backend: self.backend.clone(),
                            detail: e.to_string(),
                        })?;
                        let parsed = serde_json::from_str(&text).map_err(|e| ProviderError::MalformedResponse {
                            backend: self.backend.clone(),
                            detail: e.to_string(),
                        })?;
                        return Ok((parsed, attempt));
                    }
                    let detail = resp.text().unwrap_or_default();
                    if !retryable_status(status) {
                        return Err(ProviderError::Rejected {
                            backend: self.backend.clone(),
                            status,
                            detail,
                        });
                    }
                    last_detail = format!("HTTP {status}: {detail}");
                }
                Err(e) => last_detail = e.to_string(),
            }
            tracing::debug!(backend = %self.backend, attempt, detail = %last_detail, "request failed");
            if attempt < attempts {
                std::thread::sleep(self.retry.delay_after(attempt));
            }
        }
        Err(ProviderError::BackendUnavailable {
            backend: self.backend.clone(),
            attempts,
            detail: last_detail,
        })
    }
}

/// Chat-completions style generator (`model`, `messages`, `max_tokens`,
/// `temperature`). Reads `choices[0].message.content`.
#[derive(Debug)]
pub struct OpenAiChatGenerator {
    id: String,
    model: String,
    http: JsonClient,
}

impl OpenAiChatGenerator {
    pub fn new(id: impl Into<String>, url: impl Into<String>, model: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Self {
        let id = id.into();
        OpenAiChatGenerator {
            http: JsonClient::new(id.clone(), url.into(), api_key, retry, Duration::from_secs(300)),
            id,
            model: model.into(),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl TextGenerator for OpenAiChatGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, ProviderError> {
        request.validate()?;
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        let (resp, attempts): (ChatResponse, u32) = self.http.post(&body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::MalformedResponse {
                backend: self.id.clone(),
                detail: "no choices[0].message.content".into(),
            })?;
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("http_attempts".to_string(), attempts.to_string());
        meta.insert("model".to_string(), self.model.clone());
        Ok(GenerationResult {
            text,
            backend_id: self.id.clone(),
            attempt_metadata: meta,
        })
    }
}

/// Client for `POST {"texts": [...]}` → `{"vectors": [[...]], "dim": N}`.
#[derive(Debug)]
pub struct HttpEmbedder {
    id: String,
    http: JsonClient,
    dim: Mutex<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

impl HttpEmbedder {
    pub fn new(id: impl Into<String>, url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Self {
        let id = id.into();
        HttpEmbedder {
            http: JsonClient::new(id.clone(), url.into(), api_key, retry, Duration::from_secs(120)),
            id,
            dim: Mutex::new(None),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let (resp, _): (EmbedResponse, u32) = self.http.post(&json!({ "texts": texts }))?;
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError::MalformedResponse {
                backend: self.id.clone(),
                detail: format!("expected {} vectors, got {}", texts.len(), resp.vectors.len()),
            });
        }
        {
            let mut known = self.dim.lock().expect("poisoned");
            match *known {
                Some(d) if d != resp.dim => {
                    return Err(ProviderError::DimensionMismatch {
                        expected: d,
                        actual: resp.dim,
                    })
                }
                _ => *known = Some(resp.dim),
            }
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != resp.dim {
                    return Err(ProviderError::DimensionMismatch {
                        expected: resp.dim,
                        actual: v.len(),
                    });
                }
                EmbeddingVector::new(v).map_err(|e| ProviderError::MalformedResponse {
                    backend: self.id.clone(),
                    detail: e.to_string(),
                })
            })
            .collect()
    }
}

/// Client for `POST {"item": "...", "responses": [...]}` →
/// `{"scores": [...], "scorer_id": "..."}`.
#[derive(Debug)]
pub struct HttpScorer {
    id: String,
    http: JsonClient,
    scale: ScoreScale,
}

#[derive(Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
    pub scorer_id: String,
}

impl HttpScorer {
    pub fn new(id: impl Into<String>, url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy, scale: ScoreScale) -> Self {
        let id = id.into();
        HttpScorer {
            http: JsonClient::new(id.clone(), url.into(), api_key, retry, Duration::from_secs(120)),
            id,
            scale,
        }
    }
}

impl OriginalityScorer for HttpScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn scale(&self) -> ScoreScale {
        self.scale
    }

    fn score(&self, item: &str, responses: &[String]) -> Result<Vec<OriginalityScore>, ProviderError> {
        let (resp, _): (ScoreResponse, u32) = self.http.post(&json!({ "item": item, "responses": responses }))?;
        if resp.scores.len() != responses.len() {
            return Err(ProviderError::MalformedResponse {
                backend: self.id.clone(),
                detail: format!("expected {} scores, got {}", responses.len(), resp.scores.len()),
            });
        }
        resp.scores
            .into_iter()
            .map(|value| {
                self.scale.check(value)?;
                Ok(OriginalityScore {
                    value,
                    scorer_id: resp.scorer_id.clone(),
                })
            })
            .collect()
    }
}
