//! Synthetic item responses under the baseline, demographic and
//! psychometric prompting styles.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::itemgen::CpsItem;
use crate::providers::{GenerationRequest, OriginalityScore, ProviderError, TextGenerator};
use crate::text;

/// Precedes the item text in every response prompt.
pub const SCENARIO_HEADER: &str = "Scenario:";

pub const DEFAULT_RESPONSE_TEMPLATE: &str = include_str!("../assets/templates/response.txt");
pub const DEFAULT_RESPONSE_INSTRUCTION: &str = include_str!("../assets/templates/response_instruction.txt");

/// Attribute keys every demographic profile must carry.
pub const DEMOGRAPHIC_KEYS: [&str; 5] = ["first_name", "last_name", "ethnicity", "gender", "occupation"];

#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("profile `{id}`: {reason}")]
    InvalidProfile { id: String, reason: String },
    #[error("no {0} profiles available")]
    EmptyPool(String),
    #[error("style {style:?} {}", if *.has_profile { "does not take a profile" } else { "requires a profile" })]
    StyleProfileMismatch { style: PromptStyle, has_profile: bool },
    #[error("response count {n} outside [{min}, {max}]")]
    CountOutOfRange { n: usize, min: usize, max: usize },
    #[error(transparent)]
    Backend(#[from] ProviderError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    Baseline,
    Demographic,
    Psychometric,
}

impl PromptStyle {
    pub fn profile_kind(self) -> Option<ProfileKind> {
        match self {
            PromptStyle::Baseline => None,
            PromptStyle::Demographic => Some(ProfileKind::Demographic),
            PromptStyle::Psychometric => Some(ProfileKind::Psychometric),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStyle::Baseline => "baseline",
            PromptStyle::Demographic => "demographic",
            PromptStyle::Psychometric => "psychometric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Demographic,
    Psychometric,
}

/// A profile attribute: a single value or, for psychometric scales, a list
/// of statements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Text(String),
    Statements(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub id: String,
    pub kind: ProfileKind,
    pub attributes: IndexMap<String, AttributeValue>,
    /// Persona paragraph injected into prompts.
    pub rendered: String,
}

impl ParticipantProfile {
    pub fn validate(&self) -> Result<(), ResponseError> {
        let invalid = |reason: String| ResponseError::InvalidProfile {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.rendered.trim().is_empty() {
            return Err(invalid("empty rendered text".into()));
        }
        match self.kind {
            ProfileKind::Demographic => {
                for key in DEMOGRAPHIC_KEYS {
                    match self.attributes.get(key) {
                        Some(AttributeValue::Text(v)) if !v.trim().is_empty() => {}
                        Some(_) => return Err(invalid(format!("attribute `{key}` must be a non-empty string"))),
                        None => return Err(invalid(format!("missing attribute `{key}`"))),
                    }
                }
            }
            ProfileKind::Psychometric => {
                if self.attributes.is_empty() {
                    return Err(invalid("no scales".into()));
                }
                for (scale, value) in &self.attributes {
                    match value {
                        AttributeValue::Statements(s) if !s.is_empty() && s.iter().all(|x| !x.trim().is_empty()) => {}
                        _ => return Err(invalid(format!("scale `{scale}` needs a non-empty statement list"))),
                    }
                }
            }
        }
        Ok(())
    }

    fn text_attr(&self, key: &str) -> &str {
        match self.attributes.get(key) {
            Some(AttributeValue::Text(v)) => v,
            _ => "",
        }
    }

    /// Name-based rendering of a demographic profile.
    pub fn render_named(&self) -> String {
        format!(
            "You are {} {}, who works as {}.",
            self.text_attr("first_name"),
            self.text_attr("last_name"),
            with_article(self.text_attr("occupation"))
        )
    }
}

fn with_article(noun: &str) -> String {
    let an = noun
        .chars()
        .next()
        .is_some_and(|c| "aeiouAEIOU".contains(c));
    format!("{} {noun}", if an { "an" } else { "a" })
}

/// Profiles indexed by kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfilePool {
    demographic: Vec<ParticipantProfile>,
    psychometric: Vec<ParticipantProfile>,
}

impl ProfilePool {
    pub fn new(profiles: Vec<ParticipantProfile>) -> Result<Self, ResponseError> {
        if profiles.is_empty() {
            return Err(ResponseError::EmptyPool("participant".into()));
        }
        let mut pool = ProfilePool::default();
        for p in profiles {
            p.validate()?;
            match p.kind {
                ProfileKind::Demographic => pool.demographic.push(p),
                ProfileKind::Psychometric => pool.psychometric.push(p),
            }
        }
        Ok(pool)
    }

    pub fn of_kind(&self, kind: ProfileKind) -> &[ParticipantProfile] {
        match kind {
            ProfileKind::Demographic => &self.demographic,
            ProfileKind::Psychometric => &self.psychometric,
        }
    }

    pub fn len(&self) -> usize {
        self.demographic.len() + self.psychometric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const SHIPPED_PROFILES: &str = include_str!("../assets/profiles.jsonl");

pub fn parse_profile_pool(contents: &str, path: &str) -> Result<ProfilePool, ResponseError> {
    let mut profiles = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: ParticipantProfile = serde_json::from_str(line).map_err(|e| ResponseError::Parse {
            path: path.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        profiles.push(p);
    }
    ProfilePool::new(profiles)
}

/// Loads a JSONL profile pool; both kinds may appear in one file.
pub fn load_profile_pool(path: &Path) -> Result<ProfilePool, ResponseError> {
    let contents = fs::read_to_string(path).map_err(|source| ResponseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_profile_pool(&contents, &path.display().to_string())
}

/// Uniform draw of a profile of `kind`.
pub fn sample_profile<'a, R: Rng + ?Sized>(
    pool: &'a ProfilePool,
    kind: ProfileKind,
    rng: &mut R,
) -> Result<&'a ParticipantProfile, ResponseError> {
    pool.of_kind(kind)
        .choose(rng)
        .ok_or_else(|| ResponseError::EmptyPool(format!("{kind:?}").to_lowercase()))
}

/// Instruction, persona (if any) and item, in that order.
pub fn build_response_prompt(
    template: &str,
    instruction: &str,
    style: PromptStyle,
    item_text: &str,
    persona: Option<&str>,
) -> Result<String, ResponseError> {
    if style.profile_kind().is_some() != persona.is_some() {
        return Err(ResponseError::StyleProfileMismatch {
            style,
            has_profile: persona.is_some(),
        });
    }
    let prompt = template
        .replacen("{scenario}", &format!("{SCENARIO_HEADER}\n{}", item_text.trim()), 1)
        .replacen("{persona}", persona.map(str::trim).unwrap_or(""), 1)
        .replacen("{instruction}", instruction.trim(), 1);
    // Collapse the gap a missing persona leaves behind.
    Ok(prompt.replace("\n\n\n\n", "\n\n").trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub id: String,
    pub item_id: String,
    pub style: PromptStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_id: Option<String>,
    pub text: String,
    pub token_count: usize,
    #[serde(default)]
    pub originality: Option<OriginalityScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseGenConfig {
    pub backend_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub min_responses: usize,
    pub max_responses: usize,
    /// Share of demographic prompts that use the profile's rendered
    /// variable-format persona; the rest use the name-based persona.
    pub demographic_variable_share: f64,
    pub instruction: String,
    pub template: String,
}

impl Default for ResponseGenConfig {
    fn default() -> Self {
        ResponseGenConfig {
            backend_id: "mock".into(),
            max_tokens: 350,
            temperature: 1.0,
            min_responses: 10,
            max_responses: 20,
            demographic_variable_share: 0.5,
            instruction: DEFAULT_RESPONSE_INSTRUCTION.to_string(),
            template: DEFAULT_RESPONSE_TEMPLATE.to_string(),
        }
    }
}

/// Generates `n` responses to `item`, drawing a fresh profile for each one
/// when the style uses profiles. `rng` drives profile draws and per-response
/// backend seeds, so one substream per item reproduces the whole set.
pub fn generate_responses<R: Rng + ?Sized>(
    generator: &dyn TextGenerator,
    item: &CpsItem,
    style: PromptStyle,
    n: usize,
    pool: Option<&ProfilePool>,
    config: &ResponseGenConfig,
    rng: &mut R,
) -> Result<Vec<ItemResponse>, ResponseError> {
    if n < config.min_responses || n > config.max_responses {
        return Err(ResponseError::CountOutOfRange {
            n,
            min: config.min_responses,
            max: config.max_responses,
        });
    }
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let (profile, persona) = match style.profile_kind() {
            None => (None, None),
            Some(kind) => {
                let pool = pool.ok_or_else(|| ResponseError::EmptyPool(format!("{kind:?}").to_lowercase()))?;
                let p = sample_profile(pool, kind, rng)?;
                let named = kind == ProfileKind::Demographic
                    && !rng.random_bool(config.demographic_variable_share.clamp(0.0, 1.0));
                let persona = if named {
                    p.render_named()
                } else {
                    p.rendered.clone()
                };
                (Some(p), Some(persona))
            }
        };
        let prompt = build_response_prompt(&config.template, &config.instruction, style, &item.text, persona.as_deref())?;
        let request = GenerationRequest {
            prompt,
            max_tokens: config.max_tokens,
            temperature: config.temperature,
            seed: rng.random(),
            backend_id: config.backend_id.clone(),
        };
        let result = generator.generate(&request)?;
        let text = text::normalize_whitespace(&result.text);
        out.push(ItemResponse {
            id: format!("{}-r{:02}", item.id, j + 1),
            item_id: item.id.clone(),
            style,
            profile_id: profile.map(|p| p.id.clone()),
            token_count: text::count_tokens(&text),
            text,
            originality: None,
        });
    }
    Ok(out)
}
