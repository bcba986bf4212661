//! Text statistics shared by the item filters, the mock backends and the
//! analysis reports: a Treebank-style tokenizer, sentence splitting, a
//! vowel-group syllable counter and Flesch reading ease.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("text contains no words or no sentences")]
    EmptyText,
}

const LEADING_PUNCT: &[char] = &['"', '\'', '(', '[', '{', '`', '\u{201c}', '\u{2018}'];
const TRAILING_PUNCT: &[char] = &[
    '.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\'', '\u{201d}', '\u{2019}',
];
const CLITICS: &[&str] = &["'s", "'re", "'ve", "'ll", "'d", "'m"];

/// Tokenizes `text` with a Treebank-style rule set.
///
/// Rules: split on whitespace; peel leading quotes/brackets and trailing
/// punctuation into their own tokens (a run of periods is one token); split
/// `n't` and the clitics `'s 're 've 'll 'd 'm` off the word they attach to.
/// Curly apostrophes are treated like `'`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        tokenize_chunk(chunk, &mut out);
    }
    out
}

/// Number of tokens produced by [`tokenize`].
pub fn count_tokens(text: &str) -> usize {
    tokenize(text).len()
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    let mut rest = chunk;
    while let Some(c) = rest.chars().next() {
        if rest.chars().count() > 1 && LEADING_PUNCT.contains(&c) {
            out.push(c.to_string());
            rest = &rest[c.len_utf8()..];
        } else {
            break;
        }
    }

    let mut trailing: Vec<String> = Vec::new();
    while let Some(c) = rest.chars().last() {
        if !TRAILING_PUNCT.contains(&c) {
            break;
        }
        if c == '.' {
            let body = rest.trim_end_matches('.');
            let dots = rest.len() - body.len();
            trailing.push(".".repeat(dots));
            rest = body;
        } else {
            trailing.push(c.to_string());
            rest = &rest[..rest.len() - c.len_utf8()];
        }
    }

    if !rest.is_empty() {
        split_contraction(rest, out);
    }
    out.extend(trailing.into_iter().rev());
}

fn split_contraction(word: &str, out: &mut Vec<String>) {
    let normalized = word.replace('\u{2019}', "'");
    let lower = normalized.to_lowercase();
    if lower.len() > 3 && lower.ends_with("n't") {
        let cut = normalized.len() - 3;
        out.push(normalized[..cut].to_string());
        out.push(normalized[cut..].to_string());
        return;
    }
    for clitic in CLITICS {
        if lower.len() > clitic.len() && lower.ends_with(clitic) {
            let cut = normalized.len() - clitic.len();
            out.push(normalized[..cut].to_string());
            out.push(normalized[cut..].to_string());
            return;
        }
    }
    out.push(normalized);
}

/// Collapses every whitespace run to a single space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased alphanumeric words (apostrophes kept inside words).
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|w| w.trim_matches(|c| c == '\'' || c == '\u{2019}').to_lowercase())
        .filter(|w| !w.is_empty())
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text.
/// Segments without any alphanumeric character are discarded.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match iter.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                sentences.push(&text[start..end]);
                start = end;
            }
        }
    }
    if start < text.len() {
        sentences.push(&text[start..]);
    }
    sentences
        .into_iter()
        .map(str::trim)
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .collect()
}

/// Syllables in one word: contiguous vowel groups (`aeiouy`), minus one for
/// a silent trailing `e` unless the word ends in `le`, never below 1.
pub fn count_syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0usize;
    let mut prev_vowel = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    if n >= 1 && letters[n - 1] == 'e' && !(n >= 2 && letters[n - 2] == 'l') {
        groups = groups.saturating_sub(1);
    }
    groups.max(1)
}

/// Counts used by [`flesch_reading_ease`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadabilityCounts {
    pub sentences: usize,
    pub words: usize,
    pub syllables: usize,
}

pub fn readability_counts(text: &str) -> ReadabilityCounts {
    let mut words = 0;
    let mut syllables = 0;
    for w in text
        .split_whitespace()
        .filter(|w| w.chars().any(char::is_alphanumeric))
    {
        words += 1;
        syllables += count_syllables(w);
    }
    ReadabilityCounts {
        sentences: split_sentences(text).len(),
        words,
        syllables,
    }
}

/// Flesch reading ease: `206.835 - 1.015 * (words/sentences) - 84.6 * (syllables/words)`.
///
/// Words are whitespace-separated chunks with at least one alphanumeric
/// character. The value is not clamped to `[0, 100]`.
pub fn flesch_reading_ease(text: &str) -> Result<f64, TextError> {
    let counts = readability_counts(text);
    if counts.words == 0 || counts.sentences == 0 {
        return Err(TextError::EmptyText);
    }
    let wps = counts.words as f64 / counts.sentences as f64;
    let spw = counts.syllables as f64 / counts.words as f64;
    Ok(206.835 - 1.015 * wps - 84.6 * spw)
}
