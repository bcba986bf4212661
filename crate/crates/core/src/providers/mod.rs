//! Uniform interfaces to text generation, text embedding and originality
//! scoring.
//!
//! Every backend is `Send + Sync` and stateless per call, so the pipeline can
//! fan requests out across worker threads. Two families of backends ship
//! here: HTTP clients ([`http`]) and deterministic in-process mocks
//! ([`mock`]).

pub mod http;
pub mod mock;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpEmbedder, HttpScorer, OpenAiChatGenerator, RetryPolicy};
pub use mock::{MockEmbedder, MockGenerator, MockGeneratorConfig, MockScorer, MockScorerConfig, ScriptedGenerator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("backend `{backend}` unavailable after {attempts} attempt(s): {detail}")]
    BackendUnavailable {
        backend: String,
        attempts: u32,
        detail: String,
    },
    #[error("backend `{backend}` returned a malformed response: {detail}")]
    MalformedResponse { backend: String, detail: String },
    #[error("backend `{backend}` rejected the request with HTTP {status}: {detail}")]
    Rejected {
        backend: String,
        status: u16,
        detail: String,
    },
    #[error("embedding dimension changed from {expected} to {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("score {value} outside declared scale [{min}, {max}]")]
    ScaleViolation { value: f64, min: f64, max: f64 },
    #[error("no backend registered under `{0}`")]
    UnknownBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    /// True for failures of the transport or remote service, as opposed to
    /// malformed requests.
    pub fn is_unavailable(&self) -> bool {
        matches!(self, ProviderError::BackendUnavailable { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Only deterministic backends use the seed.
    pub seed: u64,
    pub backend_id: String,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Raw backend output; post-processing happens downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub backend_id: String,
    #[serde(default)]
    pub attempt_metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Fails for empty, non-finite or all-zero vectors.
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::InvalidRequest("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::InvalidRequest("non-finite embedding entry".into()));
        }
        let v = EmbeddingVector { values };
        if v.norm() == 0.0 {
            return Err(ProviderError::InvalidRequest("zero-norm embedding".into()));
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity, or `None` when dimensions differ.
    pub fn cosine(&self, other: &EmbeddingVector) -> Option<f64> {
        if self.dim() != other.dim() {
            return None;
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Some((dot / (self.norm() * other.norm())).clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub min: f64,
    pub max: f64,
}

impl ScoreScale {
    /// The five-point Likert range used by originality raters.
    pub const LIKERT_5: ScoreScale = ScoreScale { min: 1.0, max: 5.0 };

    pub fn check(&self, value: f64) -> Result<(), ProviderError> {
        if value.is_finite() && value >= self.min && value <= self.max {
            Ok(())
        } else {
            Err(ProviderError::ScaleViolation {
                value,
                min: self.min,
                max: self.max,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalityScore {
    pub value: f64,
    pub scorer_id: String,
}

pub trait TextGenerator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    /// Embeds each text; output index `i` belongs to input index `i`.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

pub trait OriginalityScorer: Send + Sync {
    fn id(&self) -> &str;
    fn scale(&self) -> ScoreScale;
    /// Scores each response to `item`; output index `i` belongs to response `i`.
    fn score(&self, item: &str, responses: &[String]) -> Result<Vec<OriginalityScore>, ProviderError>;
}

/// Named backends available to a trial.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    generators: BTreeMap<String, Arc<dyn TextGenerator>>,
    embedders: BTreeMap<String, Arc<dyn Embedder>>,
    scorers: BTreeMap<String, Arc<dyn OriginalityScorer>>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("generators", &self.generators.keys().collect::<Vec<_>>())
            .field("embedders", &self.embedders.keys().collect::<Vec<_>>())
            .field("scorers", &self.scorers.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the default mock backends under the id `mock`.
    pub fn with_mocks() -> Self {
        let mut r = Self::new();
        r.register_generator("mock", Arc::new(MockGenerator::new("mock", MockGeneratorConfig::default())));
        r.register_embedder("mock", Arc::new(MockEmbedder::new("mock")));
        r.register_scorer("mock", Arc::new(MockScorer::new("mock", MockScorerConfig::default())));
        r
    }

    pub fn register_generator(&mut self, id: impl Into<String>, backend: Arc<dyn TextGenerator>) {
        self.generators.insert(id.into(), backend);
    }

    pub fn register_embedder(&mut self, id: impl Into<String>, backend: Arc<dyn Embedder>) {
        self.embedders.insert(id.into(), backend);
    }

    pub fn register_scorer(&mut self, id: impl Into<String>, backend: Arc<dyn OriginalityScorer>) {
        self.scorers.insert(id.into(), backend);
    }

    pub fn generator(&self, id: &str) -> Result<Arc<dyn TextGenerator>, ProviderError> {
        self.generators
            .get(id)
            .cloned()
            .ok_or_else(|| ProviderError::UnknownBackend(id.to_string()))
    }

    pub fn embedder(&self, id: &str) -> Result<Arc<dyn Embedder>, ProviderError> {
        self.embedders
            .get(id)
            .cloned()
            .ok_or_else(|| ProviderError::UnknownBackend(id.to_string()))
    }

    pub fn scorer(&self, id: &str) -> Result<Arc<dyn OriginalityScorer>, ProviderError> {
        self.scorers
            .get(id)
            .cloned()
            .ok_or_else(|| ProviderError::UnknownBackend(id.to_string()))
    }

    /// Routes the request to the generator named by `request.backend_id`.
    pub fn generate_text(&self, request: &GenerationRequest) -> Result<GenerationResult, ProviderError> {
        request.validate()?;
        self.generator(&request.backend_id)?.generate(request)
    }
}

/// Validates the preconditions and postconditions of an embedding call.
pub fn embed_texts(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::InvalidRequest("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::InvalidRequest(format!("text {i} is empty")));
    }
    let vectors = embedder.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::MalformedResponse {
            backend: embedder.id().to_string(),
            detail: format!("expected {} vectors, got {}", texts.len(), vectors.len()),
        });
    }
    let dim = vectors[0].dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(ProviderError::DimensionMismatch {
            expected: dim,
            actual: v.dim(),
        });
    }
    Ok(vectors)
}

/// Validates the preconditions and postconditions of a scoring call.
pub fn score_originality(
    scorer: &dyn OriginalityScorer,
    item_text: &str,
    responses: &[String],
) -> Result<Vec<OriginalityScore>, ProviderError> {
    if responses.is_empty() {
        return Err(ProviderError::InvalidRequest("no responses to score".into()));
    }
    let scores = scorer.score(item_text, responses)?;
    if scores.len() != responses.len() {
        return Err(ProviderError::MalformedResponse {
            backend: scorer.id().to_string(),
            detail: format!("expected {} scores, got {}", responses.len(), scores.len()),
        });
    }
    let scale = scorer.scale();
    for s in &scores {
        scale.check(s.value)?;
    }
    Ok(scores)
}
