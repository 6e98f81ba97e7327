//! Shared domain vocabulary: tasks, sentiment tuples and their validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Literal used on the wire for implicit aspect and opinion terms.
pub const NULL_MARKER: &str = "null";

/// Restaurant categories, in the order the prompts enumerate them.
pub const RESTAURANT_CATEGORIES: [&str; 13] = [
    "ambience general",
    "drinks prices",
    "drinks quality",
    "drinks style_options",
    "food general",
    "food prices",
    "food quality",
    "food style_options",
    "location general",
    "restaurant general",
    "restaurant miscellaneous",
    "restaurant prices",
    "service general",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {what}: {value:?}")]
pub struct UnknownValue {
    pub what: &'static str,
    pub value: String,
}

/// Sentiment polarity. There is deliberately no "objective" variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    /// Word used in prompts and model output.
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }

    /// Abbreviation used by the dataset files.
    pub fn abbreviation(self) -> &'static str {
        match self {
            Polarity::Positive => "POS",
            Polarity::Negative => "NEG",
            Polarity::Neutral => "NEU",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = UnknownValue;

    /// Accepts the prompt words and the dataset abbreviations, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Polarity::Positive),
            "negative" | "neg" => Ok(Polarity::Negative),
            "neutral" | "neu" => Ok(Polarity::Neutral),
            _ => Err(UnknownValue {
                what: "polarity",
                value: s.to_string(),
            }),
        }
    }
}

impl Serialize for Polarity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Polarity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An aspect or opinion term: either a text span or implicit ("null").
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermSpan {
    Explicit(String),
    Implicit,
}

impl TermSpan {
    pub fn explicit(text: impl Into<String>) -> Self {
        TermSpan::Explicit(text.into())
    }

    /// Reads a wire value, mapping the null marker (any case) to `Implicit`.
    pub fn from_wire(text: &str) -> Self {
        if is_null_marker(text) {
            TermSpan::Implicit
        } else {
            TermSpan::Explicit(text.to_string())
        }
    }

    pub fn as_wire(&self) -> &str {
        match self {
            TermSpan::Explicit(text) => text,
            TermSpan::Implicit => NULL_MARKER,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            TermSpan::Explicit(text) => Some(text),
            TermSpan::Implicit => None,
        }
    }

    pub fn is_implicit(&self) -> bool {
        matches!(self, TermSpan::Implicit)
    }
}

pub(crate) fn is_null_marker(text: &str) -> bool {
    text.trim().eq_ignore_ascii_case(NULL_MARKER)
}

impl Serialize for TermSpan {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_wire())
    }
}

impl<'de> Deserialize<'de> for TermSpan {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // JSON null is accepted as well as the string marker.
        let value = Option::<String>::deserialize(deserializer)?;
        Ok(match value {
            Some(s) => TermSpan::from_wire(&s),
            None => TermSpan::Implicit,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryLabel(pub String);

impl CategoryLabel {
    pub fn new(value: impl Into<String>) -> Self {
        CategoryLabel(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered set of category labels available to a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryVocabulary(Vec<CategoryLabel>);

impl CategoryVocabulary {
    /// Builds a vocabulary keeping first-seen order and dropping duplicates.
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<CategoryLabel> = Vec::new();
        for label in labels {
            let label = CategoryLabel(label.into());
            if !out.contains(&label) {
                out.push(label);
            }
        }
        CategoryVocabulary(out)
    }

    pub fn restaurant() -> Self {
        Self::new(RESTAURANT_CATEGORIES)
    }

    pub fn contains(&self, label: &CategoryLabel) -> bool {
        self.0.contains(label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CategoryLabel> {
        self.0.iter()
    }

    pub fn push(&mut self, label: CategoryLabel) {
        if !self.contains(&label) {
            self.0.push(label);
        }
    }

    pub fn sorted(mut self) -> Self {
        self.0.sort();
        self
    }
}

/// A single sentiment element slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Aspect,
    Category,
    Polarity,
    Opinion,
}

impl Element {
    pub const ALL: [Element; 4] = [
        Element::Aspect,
        Element::Category,
        Element::Polarity,
        Element::Opinion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Element::Aspect => "aspect",
            Element::Category => "category",
            Element::Polarity => "polarity",
            Element::Opinion => "opinion",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Asqp,
    Acos,
    Tasd,
    Aste,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Asqp, Task::Acos, Task::Tasd, Task::Aste];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Asqp => "asqp",
            Task::Acos => "acos",
            Task::Tasd => "tasd",
            Task::Aste => "aste",
        }
    }

    pub fn schema(self) -> TaskSchema {
        TaskSchema::for_task(self)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_ascii_uppercase())
    }
}

impl FromStr for Task {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asqp" => Ok(Task::Asqp),
            "acos" => Ok(Task::Acos),
            "tasd" => Ok(Task::Tasd),
            "aste" => Ok(Task::Aste),
            _ => Err(UnknownValue {
                what: "task",
                value: s.to_string(),
            }),
        }
    }
}

/// Per-task contract: which elements exist, their wire order, and whether
/// implicit terms are legal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskSchema {
    pub task: Task,
    pub has_category: bool,
    pub has_opinion: bool,
    pub implicit_allowed: bool,
    pub wire_order: &'static [Element],
}

const QUAD_ORDER: [Element; 4] = [
    Element::Aspect,
    Element::Category,
    Element::Polarity,
    Element::Opinion,
];
const TASD_ORDER: [Element; 3] = [Element::Aspect, Element::Category, Element::Polarity];
const ASTE_ORDER: [Element; 3] = [Element::Aspect, Element::Opinion, Element::Polarity];

impl TaskSchema {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Asqp | Task::Acos => TaskSchema {
                task,
                has_category: true,
                has_opinion: true,
                implicit_allowed: true,
                wire_order: &QUAD_ORDER,
            },
            Task::Tasd => TaskSchema {
                task,
                has_category: true,
                has_opinion: false,
                implicit_allowed: true,
                wire_order: &TASD_ORDER,
            },
            Task::Aste => TaskSchema {
                task,
                has_category: false,
                has_opinion: true,
                implicit_allowed: false,
                wire_order: &ASTE_ORDER,
            },
        }
    }

    pub fn arity(&self) -> usize {
        self.wire_order.len()
    }

    pub fn is_quad(&self) -> bool {
        self.has_category && self.has_opinion
    }

    pub fn has(&self, element: Element) -> bool {
        self.wire_order.contains(&element)
    }

    /// Elements in canonical (histogram) order, restricted to this schema.
    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        Element::ALL.into_iter().filter(|e| self.has(*e))
    }
}

/// One extracted opinion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentimentTuple {
    pub aspect: TermSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryLabel>,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion: Option<TermSpan>,
}

impl SentimentTuple {
    pub fn quad(aspect: &str, category: &str, polarity: Polarity, opinion: &str) -> Self {
        SentimentTuple {
            aspect: TermSpan::from_wire(aspect),
            category: Some(CategoryLabel::new(category)),
            polarity,
            opinion: Some(TermSpan::from_wire(opinion)),
        }
    }

    pub fn tasd(aspect: &str, category: &str, polarity: Polarity) -> Self {
        SentimentTuple {
            aspect: TermSpan::from_wire(aspect),
            category: Some(CategoryLabel::new(category)),
            polarity,
            opinion: None,
        }
    }

    pub fn aste(aspect: &str, opinion: &str, polarity: Polarity) -> Self {
        SentimentTuple {
            aspect: TermSpan::from_wire(aspect),
            category: None,
            polarity,
            opinion: Some(TermSpan::from_wire(opinion)),
        }
    }

    /// Whether two tuples agree on one element.
    pub fn agrees_on(&self, other: &SentimentTuple, element: Element) -> bool {
        match element {
            Element::Aspect => self.aspect == other.aspect,
            Element::Category => self.category == other.category,
            Element::Polarity => self.polarity == other.polarity,
            Element::Opinion => self.opinion == other.opinion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "element", rename_all = "snake_case")]
pub enum Violation {
    MissingElement(Element),
    UnexpectedElement(Element),
    ImplicitNotAllowed(Element),
    EmptyTerm(Element),
    /// An explicit term whose text is the null marker itself.
    ReservedNullText(Element),
    UnknownCategory(String),
    NotASubstring(Element),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingElement(e) => write!(f, "missing {e}"),
            Violation::UnexpectedElement(e) => write!(f, "unexpected {e}"),
            Violation::ImplicitNotAllowed(e) => write!(f, "implicit {e} not allowed"),
            Violation::EmptyTerm(e) => write!(f, "empty {e} term"),
            Violation::ReservedNullText(e) => write!(f, "explicit {e} spells the null marker"),
            Violation::UnknownCategory(c) => write!(f, "category {c:?} not in vocabulary"),
            Violation::NotASubstring(e) => write!(f, "{e} term is not a substring of the text"),
        }
    }
}

fn check_term(span: &TermSpan, element: Element, schema: &TaskSchema, out: &mut Vec<Violation>) {
    match span {
        TermSpan::Implicit => {
            // Only aspects may be implicit in TASD; it has no opinion slot at all.
            if !schema.implicit_allowed {
                out.push(Violation::ImplicitNotAllowed(element));
            }
        }
        TermSpan::Explicit(text) => {
            if text.trim().is_empty() {
                out.push(Violation::EmptyTerm(element));
            } else if is_null_marker(text) {
                out.push(Violation::ReservedNullText(element));
            }
        }
    }
}

/// Checks a tuple against a task schema and category vocabulary.
///
/// Violations are data: an empty list means the tuple is valid.
pub fn validate_tuple(
    tuple: &SentimentTuple,
    schema: &TaskSchema,
    vocab: &CategoryVocabulary,
) -> Vec<Violation> {
    let mut out = Vec::new();
    check_term(&tuple.aspect, Element::Aspect, schema, &mut out);

    match (&tuple.category, schema.has_category) {
        (Some(label), true) => {
            if !vocab.contains(label) {
                out.push(Violation::UnknownCategory(label.0.clone()));
            }
        }
        (None, true) => out.push(Violation::MissingElement(Element::Category)),
        (Some(_), false) => out.push(Violation::UnexpectedElement(Element::Category)),
        (None, false) => {}
    }

    match (&tuple.opinion, schema.has_opinion) {
        (Some(span), true) => check_term(span, Element::Opinion, schema, &mut out),
        (None, true) => out.push(Violation::MissingElement(Element::Opinion)),
        (Some(_), false) => out.push(Violation::UnexpectedElement(Element::Opinion)),
        (None, false) => {}
    }
    out
}

/// A sentence with its gold annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub text: String,
    #[serde(rename = "tuples")]
    pub gold: Vec<SentimentTuple>,
}

impl AnnotatedSentence {
    pub fn new(text: impl Into<String>, gold: Vec<SentimentTuple>) -> Self {
        AnnotatedSentence {
            text: text.into(),
            gold,
        }
    }

    /// Explicit terms that do not occur in the text after lowercasing and
    /// whitespace collapsing.
    pub fn substring_violations(&self, tuple: &SentimentTuple) -> Vec<Violation> {
        let haystack = normalize_for_containment(&self.text);
        let mut out = Vec::new();
        let terms = [(Element::Aspect, Some(&tuple.aspect)), (Element::Opinion, tuple.opinion.as_ref())];
        for (element, span) in terms {
            if let Some(TermSpan::Explicit(text)) = span {
                if !haystack.contains(&normalize_for_containment(text)) {
                    out.push(Violation::NotASubstring(element));
                }
            }
        }
        out
    }
}

pub(crate) fn normalize_for_containment(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(UnknownValue {
                what: "split",
                value: s.to_string(),
            }),
        }
    }
}

/// Train/dev/test splits of one dataset plus its category vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetBundle {
    pub name: String,
    pub schema: TaskSchema,
    pub train: Vec<AnnotatedSentence>,
    pub dev: Vec<AnnotatedSentence>,
    pub test: Vec<AnnotatedSentence>,
    pub categories: CategoryVocabulary,
}

impl DatasetBundle {
    pub fn split(&self, split: Split) -> &[AnnotatedSentence] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}
