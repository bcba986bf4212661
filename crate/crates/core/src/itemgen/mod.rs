//! Item generation: prompt assembly, the validity gate (termination
//! sentinel, minimum length, readability, priming phrases) and the
//! generate-validate retry loop.

pub mod prompt;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{GenerationRequest, ProviderError, TextGenerator};
use crate::text;
use crate::wordlist::WordList;

pub use prompt::{build_item_prompt, ItemPromptTemplate, TemplateError};

/// Models are told to end every scenario with this sentence.
pub const SENTINEL: &str = "I am finished with this scenario.";

/// Phrases that suggest a scenario primes particular solutions.
pub const DEFAULT_PRIMING_PHRASES: [&str; 7] = [
    "on the one hand",
    "on the other hand",
    "dilemma",
    "must navigate",
    "must decide",
    "has to decide",
    "is torn between",
];

pub const DEFAULT_MIN_READABILITY: f64 = 45.0;
pub const DEFAULT_MIN_TOKENS: usize = 140;

#[derive(Debug, Error)]
pub enum ItemGenError {
    #[error(transparent)]
    Backend(#[from] ProviderError),
    #[error("failed to read blacklist {path}: {source}")]
    Blacklist {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    FailReadability,
    FailLength,
    FailPriming,
    FailTermination,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::FailReadability => "fail_readability",
            Verdict::FailLength => "fail_length",
            Verdict::FailPriming => "fail_priming",
            Verdict::FailTermination => "fail_termination",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Flesch reading ease of the stripped text; `None` when it has no words.
    pub readability: Option<f64>,
    pub token_count: usize,
    pub priming_hits: Vec<String>,
    pub has_termination: bool,
    pub verdict: Verdict,
}

/// Priming phrases, matched as case-insensitive substrings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Blacklist {
    phrases: Vec<String>,
}

impl Default for Blacklist {
    fn default() -> Self {
        Blacklist::new(DEFAULT_PRIMING_PHRASES)
    }
}

impl Blacklist {
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Blacklist {
            phrases: phrases
                .into_iter()
                .map(|p| p.as_ref().trim().to_lowercase())
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    /// One phrase per line; blank lines and `#` comments are ignored.
    pub fn parse(contents: &str) -> Self {
        Blacklist::new(
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self, ItemGenError> {
        std::fs::read_to_string(path)
            .map(|c| Blacklist::parse(&c))
            .map_err(|source| ItemGenError::Blacklist {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn with_phrase(mut self, phrase: &str) -> Self {
        self.phrases.push(phrase.trim().to_lowercase());
        self
    }

    /// Every phrase that occurs in `text`, in blacklist order.
    pub fn matches(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        self.phrases.iter().filter(|p| lower.contains(p.as_str())).cloned().collect()
    }
}

/// Thresholds and phrase list for the validity gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_readability: f64,
    pub min_tokens: usize,
    pub blacklist: Blacklist,
    pub sentinel: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_readability: DEFAULT_MIN_READABILITY,
            min_tokens: DEFAULT_MIN_TOKENS,
            blacklist: Blacklist::default(),
            sentinel: SENTINEL.to_string(),
        }
    }
}

impl FilterConfig {
    pub fn readability_ok(&self, score: f64) -> bool {
        score >= self.min_readability
    }

    pub fn length_ok(&self, tokens: usize) -> bool {
        tokens >= self.min_tokens
    }

    /// First failing rule in the order termination, length, readability, priming.
    pub fn verdict(&self, has_termination: bool, token_count: usize, readability: Option<f64>, priming_hits: &[String]) -> Verdict {
        if !has_termination {
            Verdict::FailTermination
        } else if !self.length_ok(token_count) {
            Verdict::FailLength
        } else if !readability.is_some_and(|r| self.readability_ok(r)) {
            Verdict::FailReadability
        } else if !priming_hits.is_empty() {
            Verdict::FailPriming
        } else {
            Verdict::Pass
        }
    }

    /// Strips at the sentinel, then measures the stripped text.
    pub fn validate(&self, raw: &str) -> (FilterReport, String) {
        let (has_termination, stripped) = strip_at_sentinel(raw, &self.sentinel);
        let token_count = text::count_tokens(&stripped);
        let readability = text::flesch_reading_ease(&stripped).ok();
        let priming_hits = self.blacklist.matches(&stripped);
        let verdict = self.verdict(has_termination, token_count, readability, &priming_hits);
        (
            FilterReport {
                readability,
                token_count,
                priming_hits,
                has_termination,
                verdict,
            },
            stripped,
        )
    }
}

/// Flesch reading ease with the crate's syllable and sentence rules.
pub fn flesch_reading_ease(text: &str) -> Result<f64, text::TextError> {
    text::flesch_reading_ease(text)
}

pub fn count_tokens(text: &str) -> usize {
    text::count_tokens(text)
}

/// Default-blacklist phrases found in `text`.
pub fn check_priming(text: &str) -> Vec<String> {
    Blacklist::default().matches(text)
}

fn strip_at_sentinel(raw: &str, sentinel: &str) -> (bool, String) {
    match raw.find(sentinel) {
        Some(pos) => (true, raw[..pos].trim().to_string()),
        None => (false, raw.trim().to_string()),
    }
}

/// `(has_termination, stripped)`: the text before the first sentinel,
/// trimmed, or the whole text trimmed when there is no sentinel.
pub fn check_and_strip_termination(raw: &str) -> (bool, String) {
    strip_at_sentinel(raw, SENTINEL)
}

/// The gate with default thresholds.
pub fn validate_item(raw: &str) -> FilterReport {
    FilterConfig::default().validate(raw).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpsItem {
    pub id: String,
    /// Post-processed scenario without the sentinel.
    pub text: String,
    pub word_list_id: String,
    pub iteration: u32,
    pub generator_backend: String,
    pub attempt: u32,
    pub filter_report: FilterReport,
}

/// A word list for which no attempt passed the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedWordList {
    pub word_list_id: String,
    pub iteration: u32,
    pub attempts: u32,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemOutcome {
    Generated(CpsItem),
    Dropped(DroppedWordList),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItemGenConfig {
    pub backend_id: String,
    pub max_attempts: u32,
    pub max_tokens: u32,
    pub temperature: f64,
    pub filter: FilterConfig,
    pub instruction: String,
    pub guidelines: String,
    #[serde(skip)]
    pub template: ItemPromptTemplate,
}

impl Default for ItemGenConfig {
    fn default() -> Self {
        ItemGenConfig {
            backend_id: "mock".into(),
            max_attempts: 10,
            max_tokens: 768,
            temperature: 1.0,
            filter: FilterConfig::default(),
            instruction: prompt::DEFAULT_ITEM_INSTRUCTION.to_string(),
            guidelines: prompt::DEFAULT_ITEM_GUIDELINES.to_string(),
            template: ItemPromptTemplate::default(),
        }
    }
}

impl ItemGenConfig {
    pub fn prompt<S: AsRef<str>>(&self, word_list: &WordList, exemplars: &[S]) -> String {
        build_item_prompt(
            &self.template,
            &self.instruction,
            &self.guidelines,
            exemplars,
            word_list,
            &self.filter.sentinel,
        )
    }
}

/// Generates until an output passes the gate or the attempt budget runs out.
///
/// `attempt_seed(n)` supplies the backend seed for 1-based attempt `n`.
/// Backend failures propagate; validity failures only consume attempts.
pub fn generate_item<S: AsRef<str>>(
    generator: &dyn TextGenerator,
    word_list: &WordList,
    exemplars: &[S],
    iteration: u32,
    config: &ItemGenConfig,
    attempt_seed: impl Fn(u32) -> u64,
) -> Result<ItemOutcome, ItemGenError> {
    let prompt = config.prompt(word_list, exemplars);
    let mut verdicts = Vec::new();
    for attempt in 1..=config.max_attempts {
        let request = GenerationRequest {
            prompt: prompt.clone(),
            max_tokens: config.max_tokens,
            temperature: config.temperature,
            seed: attempt_seed(attempt),
            backend_id: config.backend_id.clone(),
        };
        let result = generator.generate(&request)?;
        let (report, stripped) = config.filter.validate(&result.text);
        if report.verdict.is_pass() {
            return Ok(ItemOutcome::Generated(CpsItem {
                id: format!("it{iteration:02}-{}", word_list.id),
                text: stripped,
                word_list_id: word_list.id.clone(),
                iteration,
                generator_backend: config.backend_id.clone(),
                attempt,
                filter_report: report,
            }));
        }
        tracing::debug!(word_list = %word_list.id, attempt, verdict = report.verdict.as_str(), "item rejected");
        verdicts.push(report.verdict);
    }
    Ok(ItemOutcome::Dropped(DroppedWordList {
        word_list_id: word_list.id.clone(),
        iteration,
        attempts: config.max_attempts,
        verdicts,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ScriptedGenerator;
    use crate::wordlist::WordListSource;
    use proptest::prelude::*;

    /// 20 sentences of 7 words each: 140 word tokens plus 20 periods.
    fn passing_body() -> String {
        (0..20).map(|_| "Tom and Amy went to the park.").collect::<Vec<_>>().join(" ")
    }

    fn list() -> WordList {
        WordList::new("wl-001", vec!["Tom".into(), "Amy".into(), "Sam".into()], "park", "running", WordListSource::File).unwrap()
    }

    #[test]
    fn sentinel_is_stripped_with_trailing_chatter() {
        assert_eq!(
            check_and_strip_termination("Story. I am finished with this scenario. Bonus chatter."),
            (true, "Story.".to_string())
        );
        assert_eq!(
            check_and_strip_termination("  Story with no sentinel.\n"),
            (false, "Story with no sentinel.".to_string())
        );
        assert_eq!(check_and_strip_termination(SENTINEL), (true, String::new()));
    }

    #[test]
    fn priming_phrases() {
        assert_eq!(check_priming("She is torn between two jobs."), vec!["is torn between"]);
        assert_eq!(check_priming("This Dilemma grew."), vec!["dilemma"]);
        assert!(check_priming("They walked home.").is_empty());
        assert_eq!(
            check_priming("On the one hand yes. On the other hand no."),
            vec!["on the one hand", "on the other hand"]
        );
    }

    #[test]
    fn blacklist_file_format() {
        let b = Blacklist::parse("# comment\n\nDilemma\n  must decide \n");
        assert_eq!(b.phrases(), &["dilemma".to_string(), "must decide".to_string()]);
        let shipped = Blacklist::parse(include_str!("../../assets/priming_blacklist.txt"));
        assert_eq!(shipped, Blacklist::default());
    }

    #[test]
    fn passing_fixture() {
        let body = passing_body();
        assert_eq!(count_tokens(&body), 160);
        assert!(flesch_reading_ease(&body).unwrap() >= 45.0);
        assert!(check_priming(&body).is_empty());
        let report = validate_item(&format!("{body}\n{SENTINEL}"));
        assert_eq!(report.verdict, Verdict::Pass, "{report:?}");
        assert!(report.has_termination);
        assert_eq!(report.token_count, 160);
    }

    #[test]
    fn length_boundary() {
        // Short easy sentences of exactly `n` tokens.
        let body = |n: usize| {
            let (units, gos) = match n % 3 {
                0 => (n / 3, 0),
                2 => (n / 3, 1),
                _ => (n / 3 - 1, 2),
            };
            let mut parts = vec!["Tom ran."; units];
            parts.extend(vec!["Go."; gos]);
            let b = parts.join(" ");
            assert_eq!(count_tokens(&b), n);
            b
        };
        assert_eq!(validate_item(&format!("{} {SENTINEL}", body(140))).verdict, Verdict::Pass);
        assert_eq!(validate_item(&format!("{} {SENTINEL}", body(139))).verdict, Verdict::FailLength);
    }

    #[test]
    fn priming_insert_fails() {
        let body = passing_body().replacen("park.", "park. On the other hand it rained.", 1);
        let report = validate_item(&format!("{body} {SENTINEL}"));
        assert_eq!(report.verdict, Verdict::FailPriming);
        assert_eq!(report.priming_hits, vec!["on the other hand"]);
    }

    #[test]
    fn termination_checked_first() {
        let report = validate_item("Too short and dilemma.");
        assert_eq!(report.verdict, Verdict::FailTermination);
        assert!(!report.has_termination);
        assert_eq!(report.priming_hits, vec!["dilemma"]);
    }

    #[test]
    fn unreadable_fixture_fails_readability() {
        // Long polysyllabic sentences; independently scored at about -206.
        let sentence = "Institutional organizational considerations necessitate comprehensive interdepartmental communication regarding unanticipated administrative complications affecting operational capabilities";
        let body = (0..10).map(|_| format!("{sentence}.")).collect::<Vec<_>>().join(" ");
        let score = flesch_reading_ease(&body).unwrap();
        assert!(score < 45.0, "{score}");
        assert!((score - UNREADABLE_FIXTURE_SCORE).abs() < 1e-9, "{score}");
        let report = validate_item(&format!("{body} {SENTINEL}"));
        assert_eq!(report.verdict, Verdict::FailReadability);
    }

    /// Computed by a standalone script with the same formula and syllable rule.
    const UNREADABLE_FIXTURE_SCORE: f64 = -206.20357142857137;

    #[test]
    fn generate_passes_on_first_attempt() {
        let ok = format!("{} {SENTINEL}", passing_body());
        let g = ScriptedGenerator::new("s", vec![Ok(ok)]);
        let out = generate_item(&g, &list(), &[] as &[&str], 1, &ItemGenConfig::default(), |a| a as u64).unwrap();
        match out {
            ItemOutcome::Generated(item) => {
                assert_eq!(item.attempt, 1);
                assert_eq!(item.id, "it01-wl-001");
                assert!(!item.text.contains(SENTINEL));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generate_retries_until_pass() {
        let bad = "No sentinel here.".to_string();
        let ok = format!("{} {SENTINEL}", passing_body());
        let g = ScriptedGenerator::new("s", vec![Ok(bad.clone()), Ok(bad.clone()), Ok(bad), Ok(ok)]);
        let out = generate_item(&g, &list(), &["ex"], 2, &ItemGenConfig::default(), |a| a as u64).unwrap();
        assert!(matches!(out, ItemOutcome::Generated(CpsItem { attempt: 4, .. })));
        assert_eq!(g.prompts().len(), 4);
    }

    #[test]
    fn generate_drops_after_budget() {
        let g = ScriptedGenerator::new("s", vec![Ok("No sentinel here.".into())]);
        let out = generate_item(&g, &list(), &[] as &[&str], 1, &ItemGenConfig::default(), |a| a as u64).unwrap();
        match out {
            ItemOutcome::Dropped(d) => {
                assert_eq!(d.attempts, 10);
                assert_eq!(d.verdicts, vec![Verdict::FailTermination; 10]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(g.prompts().len(), 10);
    }

    #[test]
    fn backend_error_propagates() {
        let err = ProviderError::BackendUnavailable {
            backend: "s".into(),
            attempts: 3,
            detail: "down".into(),
        };
        let g = ScriptedGenerator::new("s", vec![Err(err)]);
        let out = generate_item(&g, &list(), &[] as &[&str], 1, &ItemGenConfig::default(), |a| a as u64);
        assert!(matches!(out, Err(ItemGenError::Backend(ProviderError::BackendUnavailable { .. }))));
    }

    proptest! {
        #[test]
        fn adding_a_phrase_never_turns_priming_failure_into_pass(extra in "[a-z]{1,6}( [a-z]{1,6}){0,2}") {
            let body = passing_body().replacen("park.", "park. It was a dilemma.", 1);
            let raw = format!("{body} {SENTINEL}");
            let base = FilterConfig::default();
            prop_assume!(base.validate(&raw).0.verdict == Verdict::FailPriming);
            let extended = FilterConfig { blacklist: base.blacklist.clone().with_phrase(&extra), ..base };
            prop_assert_eq!(extended.validate(&raw).0.verdict, Verdict::FailPriming);
        }

        #[test]
        fn passing_items_revalidate(n in 140usize..220, sep in "[ \n]{1,3}") {
            let body = (0..n).map(|i| if i % 7 == 6 { "park." } else { "cat" }).collect::<Vec<_>>().join(&sep);
            let raw = format!("\n\n{body}{sep}{SENTINEL} trailing");
            let (report, stripped) = FilterConfig::default().validate(&raw);
            prop_assume!(report.verdict == Verdict::Pass);
            let (again, _) = FilterConfig::default().validate(&format!("{stripped} {SENTINEL}"));
            prop_assert_eq!(again, report);
        }
    }
}
