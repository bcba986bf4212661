//! Word lists (three names, a place and an action) that seed item
//! generation: parsing model output, validation, deduplication and JSONL
//! persistence.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{GenerationRequest, ProviderError, TextGenerator};
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum WordListError {
    #[error("invalid word list `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: duplicate word list id `{id}`")]
    DuplicateId { path: String, line: usize, id: String },
    #[error("no valid word lists in {batches} generated batch(es)")]
    NoValidLists { batches: usize },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Backend(#[from] ProviderError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordListSource {
    Generated,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordList {
    pub id: String,
    pub names: Vec<String>,
    pub place: String,
    pub action: String,
    pub source: WordListSource,
}

impl WordList {
    /// Builds a list after trimming every entry; enforces the 3/1/1 schema.
    pub fn new(
        id: impl Into<String>,
        names: Vec<String>,
        place: impl Into<String>,
        action: impl Into<String>,
        source: WordListSource,
    ) -> Result<Self, WordListError> {
        let list = WordList {
            id: id.into(),
            names: names.into_iter().map(|n| n.trim().to_string()).collect(),
            place: place.into().trim().to_string(),
            action: action.into().trim().to_string(),
            source,
        };
        list.validate()?;
        Ok(list)
    }

    pub fn validate(&self) -> Result<(), WordListError> {
        let invalid = |reason: String| WordListError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.names.len() != 3 {
            return Err(invalid(format!("expected 3 names, found {}", self.names.len())));
        }
        if self.names.iter().any(|n| n.trim().is_empty()) {
            return Err(invalid("empty name".into()));
        }
        let distinct: HashSet<String> = self.names.iter().map(|n| n.trim().to_lowercase()).collect();
        if distinct.len() != 3 {
            return Err(invalid("duplicate name".into()));
        }
        if self.place.trim().is_empty() {
            return Err(invalid("empty place".into()));
        }
        if self.action.trim().is_empty() {
            return Err(invalid("empty action".into()));
        }
        Ok(())
    }

    /// Lowercased, trimmed `(names..., place, action)`; the dedup key.
    pub fn normalized_key(&self) -> [String; 5] {
        let n = |s: &str| s.trim().to_lowercase();
        [
            n(&self.names[0]),
            n(&self.names[1]),
            n(&self.names[2]),
            n(&self.place),
            n(&self.action),
        ]
    }

    /// All five entries, names first.
    pub fn entries(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.names.iter().map(String::as_str).collect();
        v.push(&self.place);
        v.push(&self.action);
        v
    }

    /// The labeled form `names=[A, B, C]; place=P; action=X`.
    pub fn labeled(&self) -> String {
        format!(
            "names=[{}]; place={}; action={}",
            self.names.join(", "),
            self.place,
            self.action
        )
    }
}

fn labeled_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)names\s*[=:]\s*\[([^\]]*)\]\s*[;,]\s*place\s*[=:]\s*([^;]+?)\s*[;,]\s*action\s*[=:]\s*([^;]+?)\s*[.;]?\s*$")
            .expect("static regex")
    })
}

fn enumeration_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*\u{2022}])\s*").expect("static regex"))
}

fn name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\p{Lu}\p{Ll}+$").expect("static regex"))
}

fn unquote(s: &str) -> &str {
    s.trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}' | '`'))
        .trim()
}

/// Parses a labeled list such as `names=[Mark, Amy, Lucas]; place=beach;
/// action=swimming` anywhere in `line`.
pub fn parse_labeled_line(line: &str, id: &str) -> Option<WordList> {
    let caps = labeled_re().captures(line)?;
    let names: Vec<String> = caps[1]
        .split(',')
        .map(|n| unquote(n).to_string())
        .filter(|n| !n.is_empty())
        .collect();
    WordList::new(
        id,
        names,
        unquote(&caps[2]),
        unquote(&caps[3]),
        WordListSource::Generated,
    )
    .ok()
}

/// Parses an unlabeled line of five comma-separated entries. Entries that
/// look like a capitalised single word are names; the two remaining entries
/// are the place and the action, in that order.
pub fn parse_positional_line(line: &str, id: &str) -> Option<WordList> {
    let body = enumeration_re().replace(line, "");
    let body = body.trim().trim_start_matches('(').trim_end_matches(['.', ')']);
    let tokens: Vec<&str> = body.split(',').map(unquote).collect();
    if tokens.len() != 5 || tokens.iter().any(|t| t.is_empty()) {
        return None;
    }
    let (names, rest): (Vec<&str>, Vec<&str>) = tokens.iter().partition(|t| name_re().is_match(t));
    if names.len() != 3 || rest.len() != 2 {
        return None;
    }
    WordList::new(
        id,
        names.into_iter().map(String::from).collect(),
        rest[0],
        rest[1],
        WordListSource::Generated,
    )
    .ok()
}

/// Extracts every conforming line of model output. Lines that match neither
/// the labeled nor the positional grammar are skipped. Ids are
/// `parsed-001`, `parsed-002`, ... in line order.
pub fn parse_word_list_text(raw: &str) -> Vec<WordList> {
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let id = format!("parsed-{:03}", out.len() + 1);
        match parse_labeled_line(line, &id).or_else(|| parse_positional_line(line, &id)) {
            Some(list) => out.push(list),
            None => tracing::debug!(line = lineno + 1, text = line, "skipping non-conforming word-list line"),
        }
    }
    out
}

/// Keeps the first occurrence of each normalized list.
pub fn dedup_word_lists(lists: Vec<WordList>) -> Vec<WordList> {
    let mut seen = BTreeSet::new();
    lists
        .into_iter()
        .filter(|l| seen.insert(l.normalized_key()))
        .collect()
}

pub const DEFAULT_WORDLIST_TEMPLATE: &str = include_str!("../assets/templates/wordlists.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WordListGenParams {
    pub backend_id: String,
    pub batches: usize,
    pub per_batch: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
    /// Prompt with a `{count}` placeholder.
    pub template: String,
}

impl Default for WordListGenParams {
    fn default() -> Self {
        WordListGenParams {
            backend_id: "mock".into(),
            batches: 5,
            per_batch: 10,
            max_tokens: 2048,
            temperature: 1.0,
            seed: 0,
            template: DEFAULT_WORDLIST_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordListGeneration {
    /// Deduplicated lists with ids `wl-001`, `wl-002`, ...
    pub lists: Vec<WordList>,
    /// Lists parsed across all batches before deduplication.
    pub parsed_total: usize,
    pub duplicates_removed: usize,
}

/// Queries the generator `batches` times for `per_batch` lists each, then
/// parses, validates and deduplicates across the whole pool.
pub fn generate_word_lists(
    generator: &dyn TextGenerator,
    params: &WordListGenParams,
) -> Result<WordListGeneration, WordListError> {
    if params.batches == 0 || params.per_batch == 0 {
        return Err(WordListError::InvalidParams("batches and per_batch must be >= 1".into()));
    }
    let prompt = params.template.replace("{count}", &params.per_batch.to_string());
    let mut parsed = Vec::new();
    for batch in 0..params.batches {
        let request = GenerationRequest {
            prompt: prompt.clone(),
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            seed: derive_seed(params.seed, 0, "wordlists", &batch.to_string()),
            backend_id: params.backend_id.clone(),
        };
        let result = generator.generate(&request)?;
        let lists = parse_word_list_text(&result.text);
        tracing::info!(batch, parsed = lists.len(), "word-list batch");
        parsed.extend(lists);
    }
    if parsed.is_empty() {
        return Err(WordListError::NoValidLists {
            batches: params.batches,
        });
    }
    let parsed_total = parsed.len();
    let mut lists = dedup_word_lists(parsed);
    let duplicates_removed = parsed_total - lists.len();
    for (i, l) in lists.iter_mut().enumerate() {
        l.id = format!("wl-{:03}", i + 1);
        l.source = WordListSource::Generated;
    }
    Ok(WordListGeneration {
        lists,
        parsed_total,
        duplicates_removed,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WordListRecord {
    id: String,
    names: Vec<String>,
    place: String,
    action: String,
    source: WordListSource,
}

/// Loads and validates a JSONL file; ids must be unique. Fails on the first
/// bad line.
pub fn load_word_lists(path: &Path) -> Result<Vec<WordList>, WordListError> {
    let (lists, mut problems) = check_word_list_file(path)?;
    if problems.is_empty() {
        Ok(lists)
    } else {
        Err(problems.swap_remove(0))
    }
}

/// Checks every line of a JSONL file. Returns the valid lists and one error
/// per bad line, in line order; only I/O failures are fatal.
pub fn check_word_list_file(path: &Path) -> Result<(Vec<WordList>, Vec<WordListError>), WordListError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| WordListError::Io {
        path: display.clone(),
        source,
    })?;
    let mut lists = Vec::new();
    let mut problems = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| WordListError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_error = |message: String| WordListError::Parse {
            path: display.clone(),
            line: lineno,
            message,
        };
        let rec: WordListRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                problems.push(parse_error(e.to_string()));
                continue;
            }
        };
        let list = match WordList::new(rec.id, rec.names, rec.place, rec.action, rec.source) {
            Ok(l) => l,
            Err(e) => {
                problems.push(parse_error(e.to_string()));
                continue;
            }
        };
        if !ids.insert(list.id.clone()) {
            problems.push(WordListError::DuplicateId {
                path: display.clone(),
                line: lineno,
                id: list.id,
            });
            continue;
        }
        lists.push(list);
    }
    Ok((lists, problems))
}

pub fn save_word_lists(path: &Path, lists: &[WordList]) -> Result<(), WordListError> {
    let io = |source| WordListError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    for l in lists {
        serde_json::to_writer(&mut buf, l).expect("word list serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}
