//! Text-template serialization of records and prompt assembly.
//!
//! Every feature becomes one sentence `The <column name> is <value>.` and the
//! sentences are joined by single spaces. The prompt wraps the serialization
//! in a yes/no availability question ending with the `Answer:` cue.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledRecord;
use crate::label::RowId;

/// What to do with features whose cell is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingValuePolicy {
    /// Drop the sentence.
    #[default]
    Skip,
    /// Emit `The X is .`
    VerbatimEmpty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedInstance {
    pub row_id: RowId,
    pub text: String,
}

pub fn serialize_record(record: &LabeledRecord, policy: MissingValuePolicy) -> SerializedInstance {
    let text = record
        .features
        .iter()
        .filter(|(_, value)| policy == MissingValuePolicy::VerbatimEmpty || !value.is_empty())
        .map(|(name, value)| format!("The {name} is {value}."))
        .collect::<Vec<_>>()
        .join(" ");
    SerializedInstance { row_id: record.row_id.clone(), text }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template must contain the {{serialization}} placeholder exactly once (found {0})")]
    TemplateMissingPlaceholder(usize),
    #[error("template must end with `Answer:`")]
    MissingAnswerCue,
}

const SERIALIZATION: &str = "{serialization}";
const NOUN: &str = "{noun}";
const NOUN_CAPITALIZED: &str = "{Noun}";

/// Question wrapper around a serialization.
///
/// Placeholders: `{serialization}` (required, once), `{noun}` and `{Noun}`
/// (entity noun, the latter with its first letter uppercased).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub entity_noun: String,
    pub question_form: String,
}

impl PromptTemplate {
    pub const DEFAULT_FORM: &'static str =
        "{Noun} features: {serialization} Question: Is this {noun} available? Yes or no? Answer:";

    pub fn default_for(entity_noun: impl Into<String>) -> Self {
        PromptTemplate { entity_noun: entity_noun.into(), question_form: Self::DEFAULT_FORM.to_string() }
    }

    pub fn custom(entity_noun: impl Into<String>, question_form: impl Into<String>) -> Result<Self, TemplateError> {
        let template = PromptTemplate { entity_noun: entity_noun.into(), question_form: question_form.into() };
        template.check()?;
        Ok(template)
    }

    pub fn check(&self) -> Result<(), TemplateError> {
        let count = self.question_form.matches(SERIALIZATION).count();
        if count != 1 {
            return Err(TemplateError::TemplateMissingPlaceholder(count));
        }
        if !self.question_form.trim_end().ends_with("Answer:") {
            return Err(TemplateError::MissingAnswerCue);
        }
        Ok(())
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn build_prompt(instance: &SerializedInstance, template: &PromptTemplate) -> Result<String, TemplateError> {
    template.check()?;
    let noun_cap = capitalize(&template.entity_noun);

    // Single left-to-right pass so placeholder-like text inside cell values
    // is never substituted.
    let form = template.question_form.trim_end();
    let mut out = String::with_capacity(form.len() + instance.text.len() + 2 * noun_cap.len());
    let mut rest = form;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let (replacement, len) = if tail.starts_with(SERIALIZATION) {
            (instance.text.as_str(), SERIALIZATION.len())
        } else if tail.starts_with(NOUN) {
            (template.entity_noun.as_str(), NOUN.len())
        } else if tail.starts_with(NOUN_CAPITALIZED) {
            (noun_cap.as_str(), NOUN_CAPITALIZED.len())
        } else {
            ("{", 1)
        };
        out.push_str(replacement);
        rest = &tail[len..];
    }
    out.push_str(rest);
    Ok(out)
}
