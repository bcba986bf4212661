//! Trial orchestration: word lists, then per iteration item generation,
//! responses, scoring, embedding and exemplar selection, with every
//! iteration persisted before the next begins.
//!
//! All randomness comes from [`crate::rng`] substreams keyed by the run seed,
//! so a run directory is a pure function of `(config, seed)` under the mock
//! backends, and a resumed run continues without replaying earlier draws.

mod config;
pub mod store;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{HttpBackendSpec, MockSettings, TemplatePaths, TrialConfig, MOCK_BACKEND};
pub use store::{Manifest, RunDir, RunStatus, StatusRecord};

use crate::itemgen::{generate_item, CpsItem, DroppedWordList, ItemGenConfig, ItemGenError, ItemOutcome};
use crate::providers::{embed_texts, score_originality, BackendRegistry, EmbeddingVector, ProviderError};
use crate::responsegen::{
    generate_responses, load_profile_pool, parse_profile_pool, ItemResponse, ProfilePool, ResponseError,
    ResponseGenConfig, SHIPPED_PROFILES,
};
use crate::rng::{derive_seed, substream};
use crate::selection::{
    pairwise_similarity_matrix, select_exemplars, ExemplarSet, ScoredItem, SelectionError, SimilarityMatrix,
};
use crate::wordlist::{generate_word_lists, load_word_lists, save_word_lists, WordList, WordListError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] ProviderError),
    #[error(transparent)]
    WordLists(#[from] WordListError),
    #[error(transparent)]
    Responses(ResponseError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("iteration {iteration}: only {items} valid items for k = {k}")]
    PoolTooSmall { iteration: u32, items: usize, k: usize },
    #[error("corrupt run state: {0}")]
    CorruptState(String),
    #[error("run directory {0} already holds a run; resume it instead")]
    AlreadyExists(PathBuf),
    #[error("config differs from the one recorded in {0}")]
    ConfigMismatch(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True when a backend failed, as opposed to configuration or state.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Backend(_)
                | PipelineError::WordLists(WordListError::Backend(_))
                | PipelineError::Responses(ResponseError::Backend(_))
        )
    }
}

impl From<ItemGenError> for PipelineError {
    fn from(e: ItemGenError) -> Self {
        match e {
            ItemGenError::Backend(p) => PipelineError::Backend(p),
            other => PipelineError::Config(other.to_string()),
        }
    }
}

impl From<ResponseError> for PipelineError {
    fn from(e: ResponseError) -> Self {
        match e {
            ResponseError::Backend(p) => PipelineError::Backend(p),
            other => PipelineError::Responses(other),
        }
    }
}

/// An expert-written item used as an exemplar in the first iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedItem {
    pub id: String,
    pub text: String,
}

pub const SHIPPED_SEED_ITEMS: &str = include_str!("../../assets/seed_items.jsonl");

pub fn parse_seed_items(contents: &str) -> Result<Vec<SeedItem>, PipelineError> {
    let items = contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| PipelineError::Config(format!("seed items line {}: {e}", i + 1))))
        .collect::<Result<Vec<SeedItem>, _>>()?;
    Ok(items)
}

/// Embedding of one item, frozen at generation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemEmbedding {
    pub item_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub items: Vec<CpsItem>,
    pub dropped_word_lists: Vec<DroppedWordList>,
    pub responses: Vec<ItemResponse>,
    pub scores: Vec<ScoredItem>,
    pub embeddings: Vec<ItemEmbedding>,
    pub exemplar_set: ExemplarSet,
    /// Measured in memory only; never persisted so run directories stay
    /// byte-reproducible.
    #[serde(skip)]
    pub wall_clock: Option<Duration>,
}

impl IterationRecord {
    pub fn check(&self) -> Result<(), PipelineError> {
        let corrupt = |m: String| Err(PipelineError::CorruptState(format!("iteration {}: {m}", self.iteration)));
        if self.exemplar_set.iteration != self.iteration {
            return corrupt(format!("exemplar set is labeled iteration {}", self.exemplar_set.iteration));
        }
        let has = |id: &str| self.items.iter().any(|it| it.id == id);
        if let Some(r) = self.responses.iter().find(|r| !has(&r.item_id)) {
            return corrupt(format!("response {} refers to unknown item {}", r.id, r.item_id));
        }
        if let Some(id) = self.exemplar_set.item_ids.iter().find(|id| !has(id)) {
            return corrupt(format!("exemplar {id} is not an item of this iteration"));
        }
        let aligned = self.items.len() == self.scores.len()
            && self.items.len() == self.embeddings.len()
            && self
                .items
                .iter()
                .zip(self.scores.iter().zip(&self.embeddings))
                .all(|(it, (s, e))| it.id == s.item_id && it.id == e.item_id);
        if !aligned {
            return corrupt("items, scores and embeddings are not aligned".into());
        }
        Ok(())
    }

    /// Cosine-similarity matrix over this iteration's items.
    pub fn similarity_matrix(&self) -> Result<SimilarityMatrix, SelectionError> {
        let vectors: Vec<EmbeddingVector> = self.embeddings.iter().map(|e| e.vector.clone()).collect();
        pairwise_similarity_matrix(self.embeddings.iter().map(|e| e.item_id.clone()).collect(), &vectors)
    }

    /// Exemplar texts in selection order.
    pub fn exemplar_texts(&self) -> Vec<String> {
        self.exemplar_set
            .item_ids
            .iter()
            .filter_map(|id| self.items.iter().find(|it| &it.id == id))
            .map(|it| it.text.clone())
            .collect()
    }

    fn files(&self) -> Vec<(&'static str, Vec<u8>)> {
        vec![
            (store::ITEMS_FILE, store::to_jsonl(&self.items)),
            (store::RESPONSES_FILE, store::to_jsonl(&self.responses)),
            (store::SCORES_FILE, store::to_jsonl(&self.scores)),
            (store::EMBEDDINGS_FILE, store::to_jsonl(&self.embeddings)),
            (store::DROPPED_FILE, store::to_jsonl(&self.dropped_word_lists)),
            (store::EXEMPLARS_FILE, store::to_json(&self.exemplar_set)),
        ]
    }

    fn load(dir: &RunDir, i: u32) -> Result<Self, PipelineError> {
        let d = dir.iteration(i);
        let rec = IterationRecord {
            iteration: i,
            items: store::read_jsonl(&d.join(store::ITEMS_FILE))?,
            dropped_word_lists: store::read_jsonl(&d.join(store::DROPPED_FILE))?,
            responses: store::read_jsonl(&d.join(store::RESPONSES_FILE))?,
            scores: store::read_jsonl(&d.join(store::SCORES_FILE))?,
            embeddings: store::read_jsonl(&d.join(store::EMBEDDINGS_FILE))?,
            exemplar_set: store::read_json(&d.join(store::EXEMPLARS_FILE))?,
            wall_clock: None,
        };
        rec.check()?;
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub config: TrialConfig,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub word_lists: Vec<WordList>,
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl RunState {
    /// Reads a run directory without executing anything.
    pub fn load(run_dir: &Path) -> Result<Self, PipelineError> {
        let dir = RunDir::new(run_dir);
        let manifest = read_manifest(&dir)?;
        let word_lists = if dir.wordlists().exists() {
            load_word_lists(&dir.wordlists()).map_err(|e| PipelineError::CorruptState(e.to_string()))?
        } else {
            Vec::new()
        };
        let iterations = load_iterations(&dir)?;
        let status = if dir.status().exists() {
            store::read_json::<StatusRecord>(&dir.status())?.status
        } else {
            RunStatus::Running
        };
        Ok(RunState {
            config: manifest.config,
            seed: manifest.seed,
            run_dir: run_dir.to_path_buf(),
            word_lists,
            iterations,
            status,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.iterations.len() == self.config.iterations as usize
    }
}

fn read_manifest(dir: &RunDir) -> Result<Manifest, PipelineError> {
    let path = dir.manifest();
    if !path.exists() {
        return Err(PipelineError::CorruptState(format!("{} not found", path.display())));
    }
    let m: Manifest = store::read_json(&path)?;
    if m.config.hash() != m.config_hash {
        return Err(PipelineError::CorruptState(format!("config hash mismatch in {}", path.display())));
    }
    Ok(m)
}

fn load_iterations(dir: &RunDir) -> Result<Vec<IterationRecord>, PipelineError> {
    let done = dir.completed_iterations()?;
    let mut out = Vec::with_capacity(done.len());
    for (expected, &i) in (1u32..).zip(&done) {
        if i != expected {
            return Err(PipelineError::CorruptState(format!("iteration {expected} missing before {i}")));
        }
        out.push(IterationRecord::load(dir, i)?);
    }
    Ok(out)
}

/// Everything an iteration needs besides the previous record.
struct Trial<'a> {
    config: &'a TrialConfig,
    seed: u64,
    registry: &'a BackendRegistry,
    dir: RunDir,
    item_cfg: ItemGenConfig,
    resp_cfg: ResponseGenConfig,
    profiles: Option<ProfilePool>,
    seed_items: Vec<SeedItem>,
    threads: rayon::ThreadPool,
}

type ItemWork = (ItemOutcome, Vec<ItemResponse>, Option<ScoredItem>);

impl<'a> Trial<'a> {
    fn new(config: &'a TrialConfig, seed: u64, registry: &'a BackendRegistry, dir: RunDir) -> Result<Self, PipelineError> {
        let profiles = match config.prompting_style.profile_kind() {
            None => None,
            Some(_) => Some(match &config.profile_path {
                Some(p) => load_profile_pool(p)?,
                None => parse_profile_pool(SHIPPED_PROFILES, "shipped profiles")?,
            }),
        };
        let seed_items = match &config.seed_items_path {
            Some(p) => parse_seed_items(&fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?)?,
            None => parse_seed_items(SHIPPED_SEED_ITEMS)?,
        };
        let threads = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
        Ok(Trial {
            config,
            seed,
            registry,
            dir,
            item_cfg: config.item_gen_config()?,
            resp_cfg: config.response_gen_config()?,
            profiles,
            seed_items,
            threads,
        })
    }

    fn word_lists(&self) -> Result<Vec<WordList>, PipelineError> {
        let path = self.dir.wordlists();
        if path.exists() {
            return Ok(load_word_lists(&path)?);
        }
        let lists = match &self.config.word_list_path {
            Some(p) => load_word_lists(p)?,
            None => {
                let generator = self.registry.generator(&self.config.generator_backend)?;
                let params = self.config.word_list_params(self.seed)?;
                let generated = generate_word_lists(generator.as_ref(), &params)?;
                tracing::info!(
                    lists = generated.lists.len(),
                    duplicates = generated.duplicates_removed,
                    "generated word lists"
                );
                generated.lists
            }
        };
        if lists.is_empty() {
            return Err(PipelineError::Config("no word lists".into()));
        }
        let tmp = path.with_file_name(".tmp-wordlists.jsonl");
        save_word_lists(&tmp, &lists)?;
        fs::rename(&tmp, &path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(lists)
    }

    fn one_item(&self, wl: &WordList, iteration: u32, exemplars: &[String]) -> Result<ItemWork, PipelineError> {
        let cfg = self.config;
        let generator = self.registry.generator(&cfg.generator_backend)?;
        let outcome = generate_item(generator.as_ref(), wl, exemplars, iteration, &self.item_cfg, |attempt| {
            derive_seed(self.seed, iteration, "item", &format!("{}#{attempt}", wl.id))
        })?;
        let ItemOutcome::Generated(item) = &outcome else {
            return Ok((outcome, Vec::new(), None));
        };
        let responder = self.registry.generator(&cfg.response_backend)?;
        let mut rng = substream(self.seed, iteration, "response", &item.id);
        let mut responses = generate_responses(
            responder.as_ref(),
            item,
            cfg.prompting_style,
            cfg.responses_per_item,
            self.profiles.as_ref(),
            &self.resp_cfg,
            &mut rng,
        )?;
        let scorer = self.registry.scorer(&cfg.scorer_backend)?;
        let texts: Vec<String> = responses.iter().map(|r| r.text.clone()).collect();
        let scores = score_originality(scorer.as_ref(), &item.text, &texts)?;
        let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
        for (r, s) in responses.iter_mut().zip(scores) {
            r.originality = Some(s);
        }
        let scored = ScoredItem::new(item.id.clone(), values)?;
        Ok((outcome, responses, Some(scored)))
    }

    fn iteration(&self, i: u32, word_lists: &[WordList], prev: Option<&IterationRecord>) -> Result<IterationRecord, PipelineError> {
        let started = Instant::now();
        let exemplars: Vec<String> = match prev {
            Some(p) => p.exemplar_texts(),
            None => self.seed_items.iter().map(|s| s.text.clone()).collect(),
        };
        let work: Vec<Result<ItemWork, PipelineError>> = self
            .threads
            .install(|| word_lists.par_iter().map(|wl| self.one_item(wl, i, &exemplars)).collect());

        let mut items = Vec::new();
        let mut dropped = Vec::new();
        let mut responses = Vec::new();
        let mut scores = Vec::new();
        for w in work {
            let (outcome, rs, scored) = w?;
            match outcome {
                ItemOutcome::Generated(item) => items.push(item),
                ItemOutcome::Dropped(d) => dropped.push(d),
            }
            responses.extend(rs);
            scores.extend(scored);
        }
        let k = self.config.k;
        if items.len() < k {
            return Err(PipelineError::PoolTooSmall { iteration: i, items: items.len(), k });
        }

        let embedder = self.registry.embedder(&self.config.embedder_backend)?;
        let texts: Vec<String> = items.iter().map(|it| it.text.clone()).collect();
        let embeddings = embed_texts(embedder.as_ref(), &texts)?;
        let matrix = pairwise_similarity_matrix(items.iter().map(|it| it.id.clone()).collect(), &embeddings)?;
        let embeddings = items
            .iter()
            .zip(embeddings)
            .map(|(it, vector)| ItemEmbedding {
                item_id: it.id.clone(),
                vector,
            })
            .collect();
        let exemplar_set = select_exemplars(
            &scores,
            &matrix,
            self.config.selection_strategy,
            i,
            prev.map(|p| &p.exemplar_set),
            &self.config.constraints(),
            &mut substream(self.seed, i, "select", ""),
        )?;
        tracing::info!(
            iteration = i,
            items = items.len(),
            dropped = dropped.len(),
            i_o = exemplar_set.i_o,
            fallback = exemplar_set.fallback,
            "iteration complete"
        );
        Ok(IterationRecord {
            iteration: i,
            items,
            dropped_word_lists: dropped,
            responses,
            scores,
            embeddings,
            exemplar_set,
            wall_clock: Some(started.elapsed()),
        })
    }

    fn write_status(&self, status: RunStatus, completed: u32, error: Option<String>) -> Result<(), PipelineError> {
        let rec = StatusRecord {
            status,
            completed_iterations: completed,
            total_iterations: self.config.iterations,
            error,
        };
        store::write_atomic(&self.dir.status(), &store::to_json(&rec))
    }

    /// Runs iterations after those already in `state`, stopping early after
    /// `stop_after` iterations when given.
    fn execute(&self, state: &mut RunState, stop_after: Option<u32>) -> Result<(), PipelineError> {
        let result = (|| -> Result<(), PipelineError> {
            if state.word_lists.is_empty() {
                state.word_lists = self.word_lists()?;
            }
            let start = state.iterations.len() as u32 + 1;
            for i in start..=self.config.iterations {
                if stop_after.is_some_and(|s| i > s) {
                    break;
                }
                let rec = self.iteration(i, &state.word_lists, state.iterations.last())?;
                rec.check()?;
                self.dir.commit_iteration(i, &rec.files())?;
                state.iterations.push(rec);
                let done = state.is_complete();
                state.status = if done { RunStatus::Complete } else { RunStatus::Running };
                self.write_status(state.status, i, None)?;
            }
            Ok(())
        })();
        if let Err(e) = &result {
            state.status = RunStatus::Failed;
            tracing::error!(error = %e, "trial failed");
            self.write_status(RunStatus::Failed, state.iterations.len() as u32, Some(e.to_string()))?;
        }
        result
    }
}

/// Runs a full trial into `run_dir` with backends built from the config.
pub fn run_trial(config: &TrialConfig, seed: u64, run_dir: &Path) -> Result<RunState, PipelineError> {
    config.validate()?;
    let registry = config.build_registry()?;
    run_trial_with(&registry, config, seed, run_dir, None)
}

/// Like [`run_trial`] with explicit backends. `stop_after` ends the run
/// after that many iterations, leaving it resumable.
pub fn run_trial_with(
    registry: &BackendRegistry,
    config: &TrialConfig,
    seed: u64,
    run_dir: &Path,
    stop_after: Option<u32>,
) -> Result<RunState, PipelineError> {
    config.validate()?;
    let dir = RunDir::new(run_dir);
    if dir.manifest().exists() {
        return Err(PipelineError::AlreadyExists(run_dir.to_path_buf()));
    }
    fs::create_dir_all(run_dir).map_err(|e| PipelineError::io(run_dir, e))?;
    // The manifest goes down before any backend is called.
    store::write_atomic(&dir.manifest(), &store::to_json(&Manifest::new(config, seed)))?;
    let trial = Trial::new(config, seed, registry, dir)?;
    trial.write_status(RunStatus::Running, 0, None)?;
    let mut state = RunState {
        config: config.clone(),
        seed,
        run_dir: run_dir.to_path_buf(),
        word_lists: Vec::new(),
        iterations: Vec::new(),
        status: RunStatus::Running,
    };
    trial.execute(&mut state, stop_after)?;
    Ok(state)
}

/// Continues a run from its first missing iteration, with backends built
/// from the recorded config. When `expected` is given it must equal the
/// recorded config.
pub fn resume_trial(run_dir: &Path, expected: Option<&TrialConfig>) -> Result<RunState, PipelineError> {
    let manifest = read_manifest(&RunDir::new(run_dir))?;
    let registry = manifest.config.build_registry()?;
    resume_trial_with(&registry, run_dir, expected)
}

pub fn resume_trial_with(
    registry: &BackendRegistry,
    run_dir: &Path,
    expected: Option<&TrialConfig>,
) -> Result<RunState, PipelineError> {
    let dir = RunDir::new(run_dir);
    let manifest = read_manifest(&dir)?;
    if expected.is_some_and(|c| c.hash() != manifest.config_hash) {
        return Err(PipelineError::ConfigMismatch(dir.manifest()));
    }
    dir.clear_partial()?;
    let mut state = RunState::load(run_dir)?;
    if state.is_complete() {
        tracing::info!(run = %run_dir.display(), "run already complete");
        return Ok(state);
    }
    let trial = Trial::new(&manifest.config, manifest.seed, registry, dir)?;
    state.status = RunStatus::Running;
    trial.execute(&mut state, None)?;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub name: String,
    pub seed: u64,
    /// Relative to the sweep root.
    pub run_dir: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The failure came from a backend rather than config or storage.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub backend_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_FILE: &str = "sweep.json";

/// Runs every `(config, seed)` cell under `root/<name>-s<seed>`. Cell
/// failures are recorded and do not stop the sweep.
pub fn run_sweep(configs: &[TrialConfig], root: &Path) -> Result<SweepManifest, PipelineError> {
    if configs.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one config".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(PipelineError::Config("config names in a sweep must be distinct".into()));
    }
    fs::create_dir_all(root).map_err(|e| PipelineError::io(root, e))?;
    let mut cells = Vec::new();
    for c in configs {
        for &seed in &c.seeds {
            let rel = format!("{}-s{seed}", c.name);
            let (status, error, backend_failure) = match run_trial(c, seed, &root.join(&rel)) {
                Ok(s) => (s.status, None, false),
                Err(e) => (RunStatus::Failed, Some(e.to_string()), e.is_backend()),
            };
            cells.push(SweepCell {
                name: c.name.clone(),
                seed,
                run_dir: rel,
                status,
                error,
                backend_failure,
            });
        }
    }
    let manifest = SweepManifest { cells };
    store::write_atomic(&root.join(SWEEP_FILE), &store::to_json(&manifest))?;
    Ok(manifest)
}
