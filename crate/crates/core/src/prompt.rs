//! Prompt rendering, demonstration injection and target serialization.
//!
//! Templates live in `templates/` as plain text with `\n\n` between
//! paragraphs and a `{categories}` placeholder for category tasks. The whole
//! package (instruction, demonstrations, query) renders into one user
//! message.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    validate_tuple, AnnotatedSentence, CategoryVocabulary, DatasetBundle, Element, Split,
    SentimentTuple, Task, TaskSchema, Violation,
};

const QUAD_TEMPLATE: &str = include_str!("../templates/quad.txt");
const TASD_TEMPLATE: &str = include_str!("../templates/tasd.txt");
const ASTE_TEMPLATE: &str = include_str!("../templates/aste.txt");

pub const CATEGORIES_PLACEHOLDER: &str = "{categories}";
pub const PARAGRAPH_BREAK: &str = "\n\n";
pub const TARGET_PREFIX: &str = "Sentiment elements: ";
pub const DEFAULT_SHOTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("{0} prompt needs a non-empty category vocabulary")]
    EmptyVocabulary(Task),
    #[error("tuple {index} does not fit the {task} schema: {violations:?}")]
    SchemaViolation {
        task: Task,
        index: usize,
        violations: Vec<Violation>,
    },
    #[error("requested {requested} demonstrations but only {available} are available")]
    InsufficientDemonstrations { requested: usize, available: usize },
}

pub fn template(task: Task) -> &'static str {
    match task {
        Task::Asqp | Task::Acos => QUAD_TEMPLATE,
        Task::Tasd => TASD_TEMPLATE,
        Task::Aste => ASTE_TEMPLATE,
    }
    .trim_end()
}

/// Renders the task instruction with the vocabulary enumerated in its given
/// order.
pub fn build_instruction(schema: &TaskSchema, vocab: &CategoryVocabulary) -> Result<String, PromptError> {
    let text = template(schema.task);
    if !schema.has_category {
        return Ok(text.to_string());
    }
    if vocab.is_empty() {
        return Err(PromptError::EmptyVocabulary(schema.task));
    }
    let listed = vocab
        .iter()
        .map(|c| format!("\"{}\"", c.as_str()))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(text.replace(CATEGORIES_PLACEHOLDER, &listed))
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn render_tuple(t: &SentimentTuple, schema: &TaskSchema) -> String {
    let fields: Vec<String> = schema
        .wire_order
        .iter()
        .map(|e| match e {
            Element::Aspect => quote(t.aspect.as_wire()),
            Element::Category => quote(t.category.as_ref().map_or("", |c| c.as_str())),
            Element::Polarity => quote(t.polarity.as_str()),
            Element::Opinion => quote(t.opinion.as_ref().map_or("", |o| o.as_wire())),
        })
        .collect();
    format!("({})", fields.join(", "))
}

/// Serializes tuples as `Sentiment elements: [(...), ...]` in wire order.
///
/// Category membership is not checked here; anything else that breaks the
/// schema is rejected.
pub fn serialize_tuples(tuples: &[SentimentTuple], schema: &TaskSchema) -> Result<String, PromptError> {
    let no_vocab = CategoryVocabulary::default();
    for (index, t) in tuples.iter().enumerate() {
        let violations: Vec<Violation> = validate_tuple(t, schema, &no_vocab)
            .into_iter()
            .filter(|v| !matches!(v, Violation::UnknownCategory(_)))
            .collect();
        if !violations.is_empty() {
            return Err(PromptError::SchemaViolation {
                task: schema.task,
                index,
                violations,
            });
        }
    }
    let body = tuples
        .iter()
        .map(|t| render_tuple(t, schema))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(format!("{TARGET_PREFIX}[{body}]"))
}

/// `Input: """sentence"""`
pub fn input_line(sentence: &str) -> String {
    format!("Input: \"\"\"{sentence}\"\"\"")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPackage {
    pub instruction: String,
    pub demonstrations: Vec<Demonstration>,
    pub query: String,
    pub expected_prefix: String,
}

impl PromptPackage {
    pub fn is_few_shot(&self) -> bool {
        !self.demonstrations.is_empty()
    }

    /// The single user message sent to the endpoint.
    pub fn render(&self) -> String {
        let mut parts = Vec::with_capacity(2 + 2 * self.demonstrations.len());
        parts.push(self.instruction.as_str());
        for d in &self.demonstrations {
            parts.push(d.input.as_str());
            parts.push(d.target.as_str());
        }
        parts.push(self.query.as_str());
        parts.join(PARAGRAPH_BREAK)
    }
}

/// Builds a package with the first `k` sentences of `demos` as
/// demonstrations; `k = 0` is zero-shot.
pub fn build_package(
    schema: &TaskSchema,
    vocab: &CategoryVocabulary,
    demos: &[AnnotatedSentence],
    k: usize,
    query: &str,
) -> Result<PromptPackage, PromptError> {
    if k > demos.len() {
        return Err(PromptError::InsufficientDemonstrations {
            requested: k,
            available: demos.len(),
        });
    }
    let demonstrations = demos[..k]
        .iter()
        .map(|s| {
            Ok(Demonstration {
                input: input_line(&s.text),
                target: serialize_tuples(&s.gold, schema)?,
            })
        })
        .collect::<Result<Vec<_>, PromptError>>()?;
    Ok(PromptPackage {
        instruction: build_instruction(schema, vocab)?,
        demonstrations,
        query: input_line(query),
        expected_prefix: TARGET_PREFIX.to_string(),
    })
}

/// A prompt/completion training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunePair {
    pub prompt: String,
    pub completion: String,
}

/// One pair per sentence: the zero-shot prompt and the serialized gold.
pub fn build_finetune_pairs(bundle: &DatasetBundle, split: Split) -> Result<Vec<FinetunePair>, PromptError> {
    let instruction = build_instruction(&bundle.schema, &bundle.categories)?;
    bundle
        .split(split)
        .iter()
        .map(|s| {
            let package = PromptPackage {
                instruction: instruction.clone(),
                demonstrations: Vec::new(),
                query: input_line(&s.text),
                expected_prefix: TARGET_PREFIX.to_string(),
            };
            Ok(FinetunePair {
                prompt: package.render(),
                completion: serialize_tuples(&s.gold, &bundle.schema)?,
            })
        })
        .collect()
}
