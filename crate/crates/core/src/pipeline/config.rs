//! Trial configuration and backend construction.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::itemgen::{Blacklist, ItemGenConfig, ItemPromptTemplate};
use crate::providers::http::api_key_from_env;
use crate::providers::{
    BackendRegistry, HttpEmbedder, HttpScorer, MockEmbedder, MockGenerator, MockGeneratorConfig, MockScorer,
    MockScorerConfig, OpenAiChatGenerator, RetryPolicy, ScoreScale,
};
use crate::responsegen::{PromptStyle, ResponseGenConfig};
use crate::rng::digest_parts;
use crate::selection::{SelectionConstraints, SelectionStrategy};
use crate::wordlist::{WordListGenParams, DEFAULT_WORDLIST_TEMPLATE};

/// Id under which the in-process mock backends are registered.
pub const MOCK_BACKEND: &str = "mock";

/// Optional overrides for the shipped prompt texts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatePaths {
    pub wordlists: Option<PathBuf>,
    pub item: Option<PathBuf>,
    pub item_instruction: Option<PathBuf>,
    pub item_guidelines: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub response_instruction: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub generator: MockGeneratorConfig,
    pub scorer: MockScorerConfig,
    pub embed_dim: usize,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings {
            generator: MockGeneratorConfig::default(),
            scorer: MockScorerConfig::default(),
            embed_dim: MockEmbedder::DEFAULT_DIM,
        }
    }
}

/// Endpoints of one HTTP backend. The API key comes from
/// `CPIG_<ID>_API_KEY`, never from the config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpBackendSpec {
    /// OpenAI-compatible chat-completions URL.
    pub chat_url: Option<String>,
    pub model: Option<String>,
    pub embed_url: Option<String>,
    pub score_url: Option<String>,
    pub retry: RetryPolicy,
    pub score_scale: Option<ScoreScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub name: String,
    pub generator_backend: String,
    pub response_backend: String,
    pub scorer_backend: String,
    pub embedder_backend: String,
    pub prompting_style: PromptStyle,
    pub selection_strategy: SelectionStrategy,
    pub k: usize,
    pub iterations: u32,
    pub seeds: Vec<u64>,
    pub responses_per_item: usize,
    pub item_max_tokens: u32,
    pub response_max_tokens: u32,
    pub temperature: f64,
    pub max_attempts: u32,
    pub delta_o: f64,
    pub delta_v: f64,
    pub demographic_variable_share: f64,
    /// JSONL word lists; generated with the item backend when absent.
    pub word_list_path: Option<PathBuf>,
    pub wordlist_batches: usize,
    pub wordlist_per_batch: usize,
    pub profile_path: Option<PathBuf>,
    pub seed_items_path: Option<PathBuf>,
    pub blacklist_path: Option<PathBuf>,
    pub template_paths: TemplatePaths,
    /// Worker threads for item-level work; 0 uses all cores.
    pub parallelism: usize,
    pub mock: MockSettings,
    pub http_backends: BTreeMap<String, HttpBackendSpec>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            name: "trial".into(),
            generator_backend: MOCK_BACKEND.into(),
            response_backend: MOCK_BACKEND.into(),
            scorer_backend: MOCK_BACKEND.into(),
            embedder_backend: MOCK_BACKEND.into(),
            prompting_style: PromptStyle::Baseline,
            selection_strategy: SelectionStrategy::Greedy,
            k: 4,
            iterations: 5,
            seeds: vec![1, 2, 3],
            responses_per_item: 15,
            item_max_tokens: 768,
            response_max_tokens: 350,
            temperature: 1.0,
            max_attempts: 10,
            delta_o: 0.05,
            delta_v: 0.05,
            demographic_variable_share: 0.5,
            word_list_path: None,
            wordlist_batches: 5,
            wordlist_per_batch: 10,
            profile_path: None,
            seed_items_path: None,
            blacklist_path: None,
            template_paths: TemplatePaths::default(),
            parallelism: 0,
            mock: MockSettings::default(),
            http_backends: BTreeMap::new(),
        }
    }
}

impl TrialConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn constraints(&self) -> SelectionConstraints {
        SelectionConstraints {
            delta_o: self.delta_o,
            delta_v: self.delta_v,
            k: self.k,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad("name must be non-empty and use only [A-Za-z0-9._-]");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if !(10..=20).contains(&self.responses_per_item) {
            return bad("responses_per_item must be within [10, 20]");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.demographic_variable_share) {
            return bad("demographic_variable_share must be within [0, 1]");
        }
        if self.word_list_path.is_none() && (self.wordlist_batches == 0 || self.wordlist_per_batch == 0) {
            return bad("wordlist_batches and wordlist_per_batch must be >= 1");
        }
        self.constraints()
            .validate(self.selection_strategy)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.generator_backend != self.response_backend {
            tracing::warn!(
                generator = %self.generator_backend,
                response = %self.response_backend,
                "item and response backends differ"
            );
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(digest_parts([bytes]))
    }

    pub fn item_gen_config(&self) -> Result<ItemGenConfig, PipelineError> {
        let mut cfg = ItemGenConfig {
            backend_id: self.generator_backend.clone(),
            max_attempts: self.max_attempts,
            max_tokens: self.item_max_tokens,
            temperature: self.temperature,
            ..ItemGenConfig::default()
        };
        let t = &self.template_paths;
        if let Some(p) = &t.item {
            cfg.template = ItemPromptTemplate::new(read(p)?).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
        }
        if let Some(p) = &t.item_instruction {
            cfg.instruction = read(p)?;
        }
        if let Some(p) = &t.item_guidelines {
            cfg.guidelines = read(p)?;
        }
        if let Some(p) = &self.blacklist_path {
            cfg.filter.blacklist = Blacklist::load(p).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn response_gen_config(&self) -> Result<ResponseGenConfig, PipelineError> {
        let mut cfg = ResponseGenConfig {
            backend_id: self.response_backend.clone(),
            max_tokens: self.response_max_tokens,
            temperature: self.temperature,
            demographic_variable_share: self.demographic_variable_share,
            ..ResponseGenConfig::default()
        };
        if let Some(p) = &self.template_paths.response {
            cfg.template = read(p)?;
        }
        if let Some(p) = &self.template_paths.response_instruction {
            cfg.instruction = read(p)?;
        }
        Ok(cfg)
    }

    pub fn word_list_params(&self, seed: u64) -> Result<WordListGenParams, PipelineError> {
        let template = match &self.template_paths.wordlists {
            Some(p) => read(p)?,
            None => DEFAULT_WORDLIST_TEMPLATE.to_string(),
        };
        Ok(WordListGenParams {
            backend_id: self.generator_backend.clone(),
            batches: self.wordlist_batches,
            per_batch: self.wordlist_per_batch,
            temperature: self.temperature,
            seed,
            template,
            ..WordListGenParams::default()
        })
    }

    /// Registry with the configured mock under [`MOCK_BACKEND`] and every
    /// HTTP backend under its own id.
    pub fn build_registry(&self) -> Result<BackendRegistry, PipelineError> {
        let mut r = BackendRegistry::new();
        let m = &self.mock;
        if m.embed_dim == 0 {
            return Err(PipelineError::Config("mock.embed_dim must be >= 1".into()));
        }
        r.register_generator(MOCK_BACKEND, Arc::new(MockGenerator::new(MOCK_BACKEND, m.generator.clone())));
        r.register_embedder(MOCK_BACKEND, Arc::new(MockEmbedder::with_dim(MOCK_BACKEND, m.embed_dim)));
        r.register_scorer(MOCK_BACKEND, Arc::new(MockScorer::new(MOCK_BACKEND, m.scorer.clone())));
        for (id, spec) in &self.http_backends {
            if id == MOCK_BACKEND {
                return Err(PipelineError::Config(format!("`{MOCK_BACKEND}` is reserved")));
            }
            let key = api_key_from_env(id);
            if let Some(url) = &spec.chat_url {
                let model = spec.model.clone().unwrap_or_default();
                r.register_generator(id.clone(), Arc::new(OpenAiChatGenerator::new(id.clone(), url.clone(), model, key.clone(), spec.retry)));
            }
            if let Some(url) = &spec.embed_url {
                r.register_embedder(id.clone(), Arc::new(HttpEmbedder::new(id.clone(), url.clone(), key.clone(), spec.retry)));
            }
            if let Some(url) = &spec.score_url {
                let scale = spec.score_scale.unwrap_or(ScoreScale::LIKERT_5);
                r.register_scorer(id.clone(), Arc::new(HttpScorer::new(id.clone(), url.clone(), key.clone(), spec.retry, scale)));
            }
        }
        // Fail before any generation if a named backend is missing.
        r.generator(&self.generator_backend)?;
        r.generator(&self.response_backend)?;
        r.scorer(&self.scorer_backend)?;
        r.embedder(&self.embedder_backend)?;
        Ok(r)
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}
