//! Evaluation harness for compound aspect-based sentiment analysis (ASQP,
//! ACOS, TASD, ASTE) against chat-completion endpoints.
//!
//! The pipeline is: [`ingest`] datasets, render prompts with [`prompt`],
//! query an endpoint through [`client`], read answers with [`parser`], score
//! with [`scorer`], attribute errors with [`analysis`], and tie it together
//! in [`orchestrator`].

pub mod analysis;
pub mod client;
pub mod ingest;
pub mod orchestrator;
pub mod parser;
pub mod prompt;
pub mod scorer;
pub mod types;

pub use parser::{canonicalize, parse_response, CanonicalizationPolicy, ParseMode, ParseOutcome};
pub use prompt::{build_instruction, build_package, serialize_tuples, PromptPackage};
pub use orchestrator::{report_table, run_eval, EvalReport, RunConfig};
pub use scorer::{score_sentence, Counts};
pub use types::{
    validate_tuple, AnnotatedSentence, CategoryLabel, CategoryVocabulary, DatasetBundle, Element,
    Polarity, SentimentTuple, Split, Task, TaskSchema, TermSpan, Violation,
};

/// Run metrics in the precision used throughout the harness.
pub type RunMetrics = scorer::RunMetrics<f64>;
pub type AggregateMetrics = scorer::AggregateMetrics<f64>;
/// Single-precision variants, for callers that store many metrics.
pub type RunMetricsF32 = scorer::RunMetrics<f32>;
pub type AggregateMetricsF32 = scorer::AggregateMetrics<f32>;
