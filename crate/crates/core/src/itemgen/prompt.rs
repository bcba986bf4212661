//! Item-generation prompt assembly.

use thiserror::Error;

use crate::wordlist::WordList;

pub const EXEMPLAR_OPEN: &str = "<example>";
pub const EXEMPLAR_CLOSE: &str = "</example>";

pub const DEFAULT_ITEM_TEMPLATE: &str = include_str!("../../assets/templates/item.txt");
pub const DEFAULT_ITEM_INSTRUCTION: &str = include_str!("../../assets/templates/item_instruction.txt");
pub const DEFAULT_ITEM_GUIDELINES: &str = include_str!("../../assets/templates/item_guidelines.txt");

/// Placeholders an item template must contain, in this order.
pub const ITEM_PLACEHOLDERS: [&str; 5] = ["{instruction}", "{guidelines}", "{exemplars}", "{word_list}", "{sentinel}"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template is missing placeholder {0}")]
    Missing(&'static str),
    #[error("placeholder {0} must come after {1}")]
    OutOfOrder(&'static str, &'static str),
}

/// A validated item prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemPromptTemplate {
    template: String,
}

impl Default for ItemPromptTemplate {
    fn default() -> Self {
        ItemPromptTemplate::new(DEFAULT_ITEM_TEMPLATE).expect("shipped template is valid")
    }
}

impl ItemPromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, TemplateError> {
        let template = template.into();
        let mut last: Option<(usize, &'static str)> = None;
        for p in ITEM_PLACEHOLDERS {
            let pos = template.find(p).ok_or(TemplateError::Missing(p))?;
            if let Some((prev_pos, prev)) = last {
                if pos < prev_pos {
                    return Err(TemplateError::OutOfOrder(p, prev));
                }
            }
            last = Some((pos, p));
        }
        Ok(ItemPromptTemplate { template })
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }
}

/// The sentence that pins the scenario to a word list.
pub fn word_list_constraint(word_list: &WordList) -> String {
    format!(
        "The scenario must use every entry of this word list: {}.",
        word_list.labeled()
    )
}

/// Renders exemplar texts between fixed markers, in the given order.
pub fn render_exemplars<S: AsRef<str>>(exemplars: &[S]) -> String {
    if exemplars.is_empty() {
        return "(no examples)".to_string();
    }
    exemplars
        .iter()
        .map(|e| format!("{EXEMPLAR_OPEN}\n{}\n{EXEMPLAR_CLOSE}", e.as_ref().trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Fills the template with instruction, guidelines, exemplars, the word-list
/// constraint sentence and the termination sentinel.
pub fn build_item_prompt<S: AsRef<str>>(
    template: &ItemPromptTemplate,
    instruction: &str,
    guidelines: &str,
    exemplars: &[S],
    word_list: &WordList,
    sentinel: &str,
) -> String {
    // Filled last-to-first: each remaining placeholder precedes all text
    // substituted so far, so `replacen(.., 1)` always hits the template's own.
    template
        .as_str()
        .replacen("{sentinel}", sentinel, 1)
        .replacen("{word_list}", &word_list_constraint(word_list), 1)
        .replacen("{exemplars}", &render_exemplars(exemplars), 1)
        .replacen("{guidelines}", guidelines.trim(), 1)
        .replacen("{instruction}", instruction.trim(), 1)
}
