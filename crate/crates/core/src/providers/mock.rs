//! Deterministic in-process backends.
//!
//! All mocks are pure functions of their inputs, the request seed and their
//! configuration. [`MockGenerator`] recognises the three prompt families this
//! crate builds (word-list requests, item prompts and response prompts) and
//! produces output of the matching shape:
//!
//! * word-list prompts (containing the labeled grammar hint `names=[`) get
//!   labeled word-list lines;
//! * item prompts (containing the termination sentinel) get a scenario that
//!   uses every word-list entry, reuses detail sentences and the configured
//!   style marker from the exemplars in the prompt, and ends with the
//!   sentinel;
//! * everything else is answered like a response prompt, echoing content
//!   words of the scenario and, when the scenario carries the style marker,
//!   the marker itself.
//!
//! [`MockScorer`] rewards distinct-token ratio and the style marker, which
//! closes the loop: exemplars with the marker breed items with the marker,
//! whose responses score higher.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    EmbeddingVector, Embedder, GenerationRequest, GenerationResult, OriginalityScore, OriginalityScorer,
    ProviderError, ScoreScale, TextGenerator,
};
use crate::itemgen::prompt::{EXEMPLAR_CLOSE, EXEMPLAR_OPEN};
use crate::itemgen::SENTINEL;
use crate::responsegen::SCENARIO_HEADER;
use crate::rng::{digest_parts, stable_hash};
use crate::text;
use crate::wordlist::{parse_labeled_line, WordList};

const NAMES: &[&str] = &[
    "Mark", "Amy", "Lucas", "Nora", "Omar", "Priya", "Diego", "Hana", "Felix", "Grace", "Ivan", "Jade", "Kofi",
    "Lena", "Mateo", "Nina", "Owen", "Paula", "Quinn", "Rosa", "Sam", "Tara", "Umar", "Vera", "Wes", "Yara",
    "Zane", "Aiko", "Ben", "Chloe", "Dev", "Elsa", "Farah", "Gus", "Iris", "Jon", "Kira", "Leo", "Maya", "Noah",
];

const PLACES: &[&str] = &[
    "beach", "library", "bakery", "farm", "harbor", "museum", "office", "school", "garden", "market", "hospital",
    "theater", "gym", "train station", "hotel", "zoo", "cafe", "campsite", "warehouse", "bookstore", "park",
    "clinic", "studio", "airport", "stadium", "kitchen", "ferry", "bank", "lab", "town hall",
];

const ACTIONS: &[&str] = &[
    "swimming", "painting", "cooking", "hiking", "singing", "baking", "fishing", "dancing", "cycling", "writing",
    "planting", "sailing", "camping", "running", "reading", "sewing", "climbing", "skating", "drawing", "shopping",
    "teaching", "repairing", "filming", "knitting", "juggling", "rowing", "surfing", "coding", "welding", "moving",
];

/// Plain scenario sentences. `{a} {b} {c}` are names, `{p}` a place, `{x}` an action.
const BASE_SENTENCES: &[&str] = &[
    "{a} works at the {p} and likes it a lot.",
    "{b} has known {a} for a long time.",
    "Last week {c} asked {a} for help with {x}.",
    "The {p} is busy on most days.",
    "{b} is new in town and does not know many people.",
    "{a} wants to keep the peace with everyone.",
    "{c} has a plan, but it is not a good one.",
    "There is not much money left for the group.",
    "The boss at the {p} will be back in two days.",
    "{b} said that {x} was the only thing that made the week fun.",
    "{c} does not like to wait.",
    "Some of the staff think {b} is to blame.",
    "{a} is not sure who to trust.",
    "The rules at the {p} are strict.",
    "{c} got upset and left early on Friday.",
    "Now the team has less time than it needs.",
    "{a} and {b} used to go {x} each weekend.",
    "A friend of {c} said the trip was a bad idea.",
    "{b} is afraid of what the others will say.",
    "The news spread fast at the {p}.",
    "{a} told {c} that things would be fine.",
    "No one knows where the keys went.",
    "{c} needs the job to pay the rent.",
    "The event is set for next Monday.",
    "{b} has not slept well all week.",
    "Everyone wants a say in what happens next.",
];

/// Longer sentences with rare vocabulary; items that carry many of them give
/// responders more distinct material to work with.
const DETAIL_SENTENCES: &[&str] = &[
    "A leaky roof drips onto the old piano in the back room.",
    "The copper kettle whistles whenever the heater clicks on.",
    "A crate of lemons arrived with a note in purple ink.",
    "The parking lot floods after every thunderstorm.",
    "A retired sailor keeps a parrot that repeats gossip.",
    "The wifi password is taped under a dusty globe.",
    "A film crew wants to rent the hallway for a weekend.",
    "The neighbors host a loud trivia night on Thursdays.",
    "An antique clock runs twelve minutes fast.",
    "Someone left a bicycle chained to the fire escape.",
    "The only printer jams on glossy paper.",
    "A local newspaper plans a story about the place.",
    "The freezer hums and sometimes stops at midnight.",
    "A stray cat sleeps in the supply closet.",
    "The budget spreadsheet has a hidden tab nobody explains.",
    "A volunteer offers free carpentry on weekends.",
    "The mayor visits the block every spring.",
    "A marching band rehearses across the street at dawn.",
    "The elevator smells faintly of cinnamon.",
    "A donor promised a grant but wants a mural in return.",
    "The loading dock is shared with a busy florist.",
    "A vintage typewriter sits unused near the window.",
    "The landlord collects rare maps and hates noise.",
    "A youth choir needs rehearsal space in the evenings.",
];

const RESPONSE_OPENERS: &[&str] = &[
    "I would start by talking with everyone involved.",
    "My first step would be to listen.",
    "I think the best path is to slow down.",
    "A good way forward is to share the work.",
    "I would try something a little unusual.",
    "First, I would write down what each person needs.",
    "The answer here is to bring people together.",
    "I would look for a quiet moment to talk.",
];

const RESPONSE_TEMPLATES: &[&str] = &[
    "I would use the {w} to help with the {v}.",
    "We could turn the {w} into a small fundraiser.",
    "Maybe the {w} and the {v} can be swapped for a week.",
    "I would ask a friend to handle the {w}.",
    "Then I would set up a meeting near the {w}.",
    "A shared calendar could fix the {w} problem.",
    "I would trade the {w} for help with the {v}.",
    "We might invite the neighbors to use the {w}.",
];

const GENERIC_SENTENCES: &[&str] = &[
    "Here is a short answer.",
    "This is a simple reply.",
    "The idea is easy to follow.",
    "Each part fits with the rest.",
    "It ends on a calm note.",
];

const STOPWORDS: &[&str] = &[
    "about", "after", "again", "would", "their", "there", "these", "those", "which", "while", "where", "being",
    "other", "every", "still", "could", "should", "think", "thing", "things", "before", "scenario", "finished",
];

fn seeded(parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest_parts(parts.iter().copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockGeneratorConfig {
    /// Phrase copied from exemplars into new items and from items into
    /// responses.
    pub style_marker: String,
    /// Chance that an item carries the marker when no exemplar does.
    pub spontaneous_marker_rate: f64,
    /// Scales the fraction of marker-carrying exemplars into the chance of
    /// copying the marker.
    pub marker_copy_rate: f64,
    /// Chance, scaled by the marker-carrying fraction, that an item reuses
    /// all sentences of one marker-carrying exemplar (a near duplicate).
    pub clone_rate: f64,
    /// Chance of copying each detail sentence found in the exemplars.
    pub detail_copy_rate: f64,
    /// Fresh detail sentences added per item: uniform in `0..=max_fresh_details`.
    pub max_fresh_details: usize,
    /// Chance that an item output violates one filter rule.
    pub invalid_rate: f64,
    /// Chance that a response repeats the marker of a marker-carrying item.
    pub response_marker_rate: f64,
}

impl Default for MockGeneratorConfig {
    fn default() -> Self {
        MockGeneratorConfig {
            style_marker: "A brass bell hangs over the front door.".into(),
            spontaneous_marker_rate: 0.1,
            marker_copy_rate: 0.9,
            clone_rate: 0.3,
            detail_copy_rate: 0.5,
            max_fresh_details: 2,
            invalid_rate: 0.1,
            response_marker_rate: 0.8,
        }
    }
}

/// Deterministic text generator driven by a seeded hash of `(prompt, seed)`.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    id: String,
    config: MockGeneratorConfig,
    count_re: Regex,
}

impl MockGenerator {
    pub fn new(id: impl Into<String>, config: MockGeneratorConfig) -> Self {
        MockGenerator {
            id: id.into(),
            config,
            count_re: Regex::new(r"(\d+)\s+(?:\w+\s+)?word lists").expect("static regex"),
        }
    }

    pub fn config(&self) -> &MockGeneratorConfig {
        &self.config
    }

    fn word_lists(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let count = self
            .count_re
            .captures(prompt)
            .and_then(|c| c[1].parse::<usize>().ok())
            .unwrap_or(10)
            .clamp(1, 100);
        let mut out = format!("Here are {count} word lists:\n");
        for i in 0..count {
            let names: Vec<&str> = NAMES.choose_multiple(rng, 3).copied().collect();
            let place = PLACES.choose(rng).expect("non-empty");
            let action = ACTIONS.choose(rng).expect("non-empty");
            if rng.random_bool(0.2) {
                // Unlabeled, interleaved form.
                out.push_str(&format!(
                    "{}. \"{}\", \"{}\", \"{}\", \"{}\", \"{}\"\n",
                    i + 1,
                    names[0],
                    place,
                    names[1],
                    names[2],
                    action
                ));
            } else {
                out.push_str(&format!(
                    "{}. names=[{}, {}, {}]; place={}; action={}\n",
                    i + 1,
                    names[0],
                    names[1],
                    names[2],
                    place,
                    action
                ));
            }
        }
        out
    }

    fn item(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let cfg = &self.config;
        let word_list = prompt.lines().find_map(|l| parse_labeled_line(l, "prompt"));
        let (names, place, action) = match &word_list {
            Some(WordList {
                names, place, action, ..
            }) => (names.clone(), place.clone(), action.clone()),
            None => (
                vec!["Alex".to_string(), "Blair".to_string(), "Casey".to_string()],
                "office".to_string(),
                "planning".to_string(),
            ),
        };
        let exemplars = extract_exemplars(prompt);
        let carriers: Vec<&str> = exemplars
            .iter()
            .copied()
            .filter(|e| e.contains(cfg.style_marker.as_str()))
            .collect();
        let carrier_frac = if exemplars.is_empty() {
            0.0
        } else {
            carriers.len() as f64 / exemplars.len() as f64
        };

        let fill = |s: &str| {
            s.replace("{a}", &names[0])
                .replace("{b}", &names[1])
                .replace("{c}", &names[2])
                .replace("{p}", &place)
                .replace("{x}", &action)
        };
        let opener = format!(
            "{}, {} and {} spend their days at the {} and share a love of {}.",
            names[0], names[1], names[2], place, action
        );

        let mut sentences: Vec<String> = vec![opener];
        let clone = !carriers.is_empty() && rng.random_bool((cfg.clone_rate * carrier_frac).clamp(0.0, 1.0));
        if clone {
            let source = carriers.choose(rng).expect("non-empty");
            sentences.extend(
                text::split_sentences(source)
                    .into_iter()
                    .filter(|s| !s.contains(" spend their days at the "))
                    .map(str::to_string),
            );
        } else {
            let mut details: Vec<String> = Vec::new();
            for e in &exemplars {
                for s in text::split_sentences(e) {
                    if DETAIL_SENTENCES.contains(&s) && !details.iter().any(|d| d == s) && rng.random_bool(cfg.detail_copy_rate) {
                        details.push(s.to_string());
                    }
                }
            }
            let fresh = rng.random_range(0..=cfg.max_fresh_details);
            for s in DETAIL_SENTENCES.choose_multiple(rng, fresh) {
                if !details.iter().any(|d| d == s) {
                    details.push(s.to_string());
                }
            }
            let mut body: Vec<String> = BASE_SENTENCES
                .choose_multiple(rng, 12)
                .map(|s| fill(s))
                .collect();
            body.extend(details);
            let marker_p = (cfg.spontaneous_marker_rate + cfg.marker_copy_rate * carrier_frac).clamp(0.0, 1.0);
            if rng.random_bool(marker_p) {
                body.push(cfg.style_marker.clone());
            }
            body[1..].shuffle(rng);
            sentences.extend(body);
        }
        let mut remaining: Vec<&str> = BASE_SENTENCES.to_vec();
        remaining.shuffle(rng);
        let mut scenario = sentences.join(" ");
        let mut extra = remaining.into_iter();
        while text::count_tokens(&scenario) < 150 {
            match extra.next() {
                Some(s) => {
                    scenario.push(' ');
                    scenario.push_str(&fill(s));
                }
                None => break,
            }
        }

        if rng.random_bool(cfg.invalid_rate.clamp(0.0, 1.0)) {
            match rng.random_range(0..3) {
                0 => return format!("{scenario}\n"),
                1 => scenario.push_str(&format!(" {} is torn between two choices.", names[0])),
                _ => {
                    scenario = sentences[0].clone();
                }
            }
        }
        format!("\n{scenario}\n\n{SENTINEL}\nLet me know if you would like any changes.\n")
    }

    fn response(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let cfg = &self.config;
        let Some(pos) = prompt.find(SCENARIO_HEADER) else {
            let n = rng.random_range(2..=4);
            return GENERIC_SENTENCES.choose_multiple(rng, n).copied().collect::<Vec<_>>().join(" ");
        };
        let persona = &prompt[..pos];
        let scenario = &prompt[pos + SCENARIO_HEADER.len()..];
        let mut vocab: Vec<String> = text::words(scenario)
            .filter(|w| w.len() >= 5 && !STOPWORDS.contains(&w.as_str()))
            .collect();
        vocab.sort();
        vocab.dedup();
        if vocab.is_empty() {
            vocab.push("problem".into());
        }
        // Personas shift the opener so profiled responders differ.
        let mut persona_rng = seeded(&[persona.as_bytes(), &rng.random::<u64>().to_le_bytes()]);
        let mut parts = vec![RESPONSE_OPENERS.choose(&mut persona_rng).expect("non-empty").to_string()];
        let n = rng.random_range(2..=4);
        for _ in 0..n {
            let t = RESPONSE_TEMPLATES.choose(rng).expect("non-empty");
            let w = vocab.choose(rng).expect("non-empty");
            let v = vocab.choose(rng).expect("non-empty");
            parts.push(t.replace("{w}", w).replace("{v}", v));
        }
        if scenario.contains(cfg.style_marker.as_str()) && rng.random_bool(cfg.response_marker_rate.clamp(0.0, 1.0)) {
            parts.push(cfg.style_marker.clone());
        }
        parts.join("\n\n  ")
    }
}

fn extract_exemplars(prompt: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = prompt;
    while let Some(start) = rest.find(EXEMPLAR_OPEN) {
        let after = &rest[start + EXEMPLAR_OPEN.len()..];
        let Some(end) = after.find(EXEMPLAR_CLOSE) else { break };
        out.push(after[..end].trim());
        rest = &after[end + EXEMPLAR_CLOSE.len()..];
    }
    out
}

fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    if text.split_whitespace().count() <= max_tokens {
        return text.to_string();
    }
    text.split_whitespace().take(max_tokens).collect::<Vec<_>>().join(" ")
}

impl TextGenerator for MockGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, ProviderError> {
        request.validate()?;
        let mut rng = seeded(&[request.prompt.as_bytes(), &request.seed.to_le_bytes(), self.id.as_bytes()]);
        let text = if request.prompt.contains(SENTINEL) {
            self.item(&request.prompt, &mut rng)
        } else if request.prompt.contains("names=[") && request.prompt.contains("word list") {
            self.word_lists(&request.prompt, &mut rng)
        } else {
            self.response(&request.prompt, &mut rng)
        };
        let mut meta = BTreeMap::new();
        meta.insert("seed".to_string(), request.seed.to_string());
        Ok(GenerationResult {
            text: truncate_tokens(&text, request.max_tokens as usize).to_string(),
            backend_id: self.id.clone(),
            attempt_metadata: meta,
        })
    }
}

/// Hashed bag-of-words embedder, L2-normalised.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    id: String,
    dim: usize,
}

impl MockEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(id: impl Into<String>) -> Self {
        Self::with_dim(id, Self::DEFAULT_DIM)
    }

    pub fn with_dim(id: impl Into<String>, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        MockEmbedder { id: id.into(), dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for w in text::words(text) {
            v[(stable_hash([w.as_bytes()]) % self.dim as u64) as usize] += 1.0;
            any = true;
        }
        if !any {
            v[(stable_hash([text.as_bytes()]) % self.dim as u64) as usize] = 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl Embedder for MockEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        texts.iter().map(|t| EmbeddingVector::new(self.embed_one(t))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockScorerConfig {
    pub intercept: f64,
    pub slope: f64,
    /// Added when the response contains `style_marker`.
    pub marker_bonus: f64,
    pub style_marker: String,
    pub scale: ScoreScale,
}

impl Default for MockScorerConfig {
    fn default() -> Self {
        MockScorerConfig {
            intercept: 1.0,
            slope: 2.5,
            marker_bonus: 1.0,
            style_marker: MockGeneratorConfig::default().style_marker,
            scale: ScoreScale::LIKERT_5,
        }
    }
}

/// Originality as an affine function of distinct-token ratio plus a marker
/// bonus, clamped to the declared scale.
#[derive(Debug, Clone)]
pub struct MockScorer {
    id: String,
    config: MockScorerConfig,
}

impl MockScorer {
    pub fn new(id: impl Into<String>, config: MockScorerConfig) -> Self {
        MockScorer { id: id.into(), config }
    }

    /// Distinct words over total words; 0 for text without words.
    pub fn distinct_ratio(response: &str) -> f64 {
        let words: Vec<String> = text::words(response).collect();
        if words.is_empty() {
            return 0.0;
        }
        let mut distinct = words.clone();
        distinct.sort();
        distinct.dedup();
        distinct.len() as f64 / words.len() as f64
    }

    pub fn score_one(&self, response: &str) -> f64 {
        let c = &self.config;
        let ratio = Self::distinct_ratio(response);
        let bonus = if !c.style_marker.is_empty() && response.contains(c.style_marker.as_str()) {
            c.marker_bonus
        } else {
            0.0
        };
        (c.intercept + c.slope * ratio + bonus).clamp(c.scale.min, c.scale.max)
    }
}

impl OriginalityScorer for MockScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn scale(&self) -> ScoreScale {
        self.config.scale
    }

    fn score(&self, _item: &str, responses: &[String]) -> Result<Vec<OriginalityScore>, ProviderError> {
        Ok(responses
            .iter()
            .map(|r| OriginalityScore {
                value: self.score_one(r),
                scorer_id: self.id.clone(),
            })
            .collect())
    }
}

/// Replays a fixed queue of outputs and records every prompt it receives.
/// Once the queue is empty the last entry repeats.
#[derive(Debug)]
pub struct ScriptedGenerator {
    id: String,
    queue: Mutex<VecDeque<Result<String, ProviderError>>>,
    last: Mutex<Option<Result<String, ProviderError>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedGenerator {
    pub fn new(id: impl Into<String>, outputs: Vec<Result<String, ProviderError>>) -> Self {
        ScriptedGenerator {
            id: id.into(),
            queue: Mutex::new(outputs.into()),
            last: Mutex::new(None),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("poisoned").clone()
    }
}

impl TextGenerator for ScriptedGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, ProviderError> {
        self.prompts.lock().expect("poisoned").push(request.prompt.clone());
        let next = self.queue.lock().expect("poisoned").pop_front();
        let out = match next {
            Some(o) => {
                *self.last.lock().expect("poisoned") = Some(o.clone());
                o
            }
            None => self
                .last
                .lock()
                .expect("poisoned")
                .clone()
                .unwrap_or_else(|| Ok(String::new())),
        };
        out.map(|text| GenerationResult {
            text,
            backend_id: self.id.clone(),
            attempt_metadata: BTreeMap::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str, seed: u64) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.into(),
            max_tokens: 768,
            temperature: 1.0,
            seed,
            backend_id: "mock".into(),
        }
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let g = MockGenerator::new("mock", MockGeneratorConfig::default());
        let a = g.generate(&req("Tell me something.", 1)).unwrap().text;
        let b = g.generate(&req("Tell me something.", 1)).unwrap().text;
        let c = g.generate(&req("Tell me something.", 2)).unwrap().text;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn token_disjoint_texts_are_orthogonal() {
        let e = MockEmbedder::new("mock");
        let texts = vec!["apple banana cherry".to_string(), "river stone window".to_string()];
        // Fixture check: no hash collisions between the two token sets.
        let slots = |t: &str| -> Vec<u64> { text::words(t).map(|w| stable_hash([w.as_bytes()]) % 256).collect() };
        let (sa, sb) = (slots(&texts[0]), slots(&texts[1]));
        assert!(sa.iter().all(|s| !sb.contains(s)));
        let v = e.embed(&texts).unwrap();
        assert!(v[0].cosine(&v[1]).unwrap().abs() < 1e-9);
    }

    #[test]
    fn identical_texts_have_unit_similarity() {
        let e = MockEmbedder::new("mock");
        let v = e.embed(&["abc".into(), "abc".into()]).unwrap();
        assert!((v[0].cosine(&v[1]).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(v[0].dim(), 256);
    }

    #[test]
    fn scorer_floor_and_monotonicity() {
        let s = MockScorer::new("mock", MockScorerConfig::default());
        let scores = s.score("item", &["".into()]).unwrap();
        assert_eq!(scores[0].value, 1.0);
        // distinct ratios 1/4, 2/4, 4/4
        let fixtures = ["go go go go", "go go stop stop", "go stop wait run"];
        let ratios: Vec<f64> = fixtures.iter().map(|f| MockScorer::distinct_ratio(f)).collect();
        assert_eq!(ratios, vec![0.25, 0.5, 1.0]);
        let vals: Vec<f64> = fixtures.iter().map(|f| s.score_one(f)).collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2], "{vals:?}");
        assert_eq!(s.score_one("go stop"), s.score_one("go stop"));
    }

    #[test]
    fn scorer_rewards_marker() {
        let s = MockScorer::new("mock", MockScorerConfig::default());
        let marker = MockScorerConfig::default().style_marker;
        assert!(s.score_one(&format!("plan ahead. {marker}")) > s.score_one("plan ahead."));
    }

    #[test]
    fn scripted_generator_replays_and_repeats_last() {
        let g = ScriptedGenerator::new("s", vec![Ok("one".into()), Ok("two".into())]);
        let texts: Vec<String> = (0..3).map(|i| g.generate(&req("p", i)).unwrap().text).collect();
        assert_eq!(texts, vec!["one", "two", "two"]);
        assert_eq!(g.prompts().len(), 3);
    }

    #[test]
    fn exemplar_extraction() {
        let p = format!("x {EXEMPLAR_OPEN}\nfirst\n{EXEMPLAR_CLOSE} y {EXEMPLAR_OPEN}second{EXEMPLAR_CLOSE}");
        assert_eq!(extract_exemplars(&p), vec!["first", "second"]);
    }
}
