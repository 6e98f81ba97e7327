//! The evaluation pipeline and its on-disk artifacts.
//!
//! An output directory holds `run-<i>/predictions.jsonl` for every pass,
//! followed by the report-level files written once all passes finish. The
//! report is a function of the persisted predictions, so [`rescore`] can
//! rebuild it without an endpoint.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigEcho, ConfigError, RunConfig};
use super::report::render_run_report;
use crate::analysis::{
    align_errors, error_histogram, polarity_confusion, sample_for_review, write_records_jsonl, ErrorHistogram,
    ErrorRecord, PolarityConfusion, ALIGNMENT_METHOD,
};
use crate::client::{Client, ClientError, ResponseCache, Transport};
use crate::ingest::{dataset_manifest, load_dataset_with, IngestError, LoadOptions};
use crate::parser::{canonicalize, parse_response, CanonicalizationPolicy, Diagnostic, DiagnosticKind, ParseMode};
use crate::prompt::{build_package, PromptError};
use crate::scorer::{aggregate, score_run, score_sentence_with, Counts, Matching};
use crate::types::{AnnotatedSentence, SentimentTuple, Split, TaskSchema};
use crate::{AggregateMetrics, RunMetrics};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const ERRORS_JSONL: &str = "errors.jsonl";
pub const REVIEW_JSON: &str = "review_sample.json";
pub const PREDICTIONS_JSONL: &str = "predictions.jsonl";

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Directory of pass `run` (1-based).
pub fn run_dir(out: &Path, run: usize) -> PathBuf {
    out.join(format!("run-{run}"))
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset {name}: {source}")]
    Ingest {
        name: String,
        #[source]
        source: IngestError,
    },
    #[error("prompt construction failed: {0}")]
    Prompt(#[from] PromptError),
    #[error("run {run}, sentence {sentence}: {source}")]
    Client {
        run: usize,
        sentence: usize,
        #[source]
        source: ClientError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {detail}")]
    Artifact { path: PathBuf, detail: String },
}

impl RunError {
    /// Process exit code: 1 configuration, 2 data, 3 endpoint.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 1,
            RunError::Prompt(PromptError::InsufficientDemonstrations { .. }) => 1,
            RunError::Client {
                source: ClientError::InvalidConfig(_),
                ..
            } => 1,
            RunError::Client { .. } => 3,
            RunError::Ingest { .. } | RunError::Prompt(_) | RunError::Io { .. } | RunError::Artifact { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One test sentence as seen in one pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub text: String,
    pub gold: Vec<SentimentTuple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Parsed tuples as they appeared in the response, before
    /// canonicalization.
    #[serde(default)]
    pub tuples: Vec<SentimentTuple>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
    pub counts: Counts,
    /// Set when the completion failed; the sentence then has no response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct Scoring<'a> {
    schema: &'a TaskSchema,
    policy: &'a CanonicalizationPolicy,
    matching: Matching,
}

impl Scoring<'_> {
    fn predict(&self, index: usize, sentence: &AnnotatedSentence, digest: Option<String>, response: Option<String>) -> Prediction {
        let outcome = match &response {
            Some(text) => parse_response(text, self.schema, ParseMode::Tolerant).unwrap_or_default(),
            None => Default::default(),
        };
        let counts = score_sentence_with(&outcome.tuples, &sentence.gold, self.policy, self.matching);
        Prediction {
            index,
            text: sentence.text.clone(),
            gold: sentence.gold.clone(),
            digest,
            response,
            tuples: outcome.tuples,
            diagnostics: outcome.diagnostics,
            counts,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub responses_with_diagnostics: usize,
}

/// Parser diagnostics totalled over every pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub responses_with_diagnostics: usize,
    pub by_kind: BTreeMap<DiagnosticKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    /// The pass that was analyzed (the best by F1, first on ties).
    pub run: usize,
    pub alignment_method: String,
    pub errors: usize,
    pub paired: usize,
    pub unmatched_predictions: usize,
    pub missed_gold: usize,
    pub near_misses: usize,
    pub histogram: ErrorHistogram,
    pub polarity_confusion: PolarityConfusion,
    /// Sentence indices drawn for manual review.
    pub review_sample: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: String,
    pub tool_version: String,
    pub config: ConfigEcho,
    pub dataset_manifest: String,
    pub split: Split,
    pub sentences: usize,
    pub gold_tuples: usize,
    pub runs: Vec<RunEntry>,
    pub aggregate: AggregateMetrics,
    pub diagnostics: DiagnosticsSummary,
    pub analysis: AnalysisSummary,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let path = if path.is_dir() {
            path.join(REPORT_JSON)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Artifact {
            path,
            detail: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub index: usize,
    pub text: String,
    pub gold: Vec<SentimentTuple>,
    pub predicted: Vec<SentimentTuple>,
    pub errors: Vec<ErrorRecord>,
}

/// Error analysis of one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub summary: AnalysisSummary,
    pub records: Vec<ErrorRecord>,
    pub review: Vec<ReviewItem>,
}

pub fn analyze_predictions(
    predictions: &[Prediction],
    run: usize,
    schema: &TaskSchema,
    policy: &CanonicalizationPolicy,
    review: super::config::ReviewConfig,
) -> Analysis {
    let canon = |ts: &[SentimentTuple]| ts.iter().map(|t| canonicalize(t, policy)).collect::<Vec<_>>();
    let per_sentence: Vec<Vec<ErrorRecord>> = predictions
        .iter()
        .map(|p| align_errors(p.index, &canon(&p.tuples), &canon(&p.gold), schema))
        .collect();
    let records: Vec<ErrorRecord> = per_sentence.iter().flatten().cloned().collect();
    let sample = sample_for_review(predictions.len(), review.size, review.seed);
    let review_items = sample
        .iter()
        .map(|&i| ReviewItem {
            index: predictions[i].index,
            text: predictions[i].text.clone(),
            gold: predictions[i].gold.clone(),
            predicted: predictions[i].tuples.clone(),
            errors: per_sentence[i].clone(),
        })
        .collect();
    let summary = AnalysisSummary {
        run,
        alignment_method: ALIGNMENT_METHOD.into(),
        errors: records.len(),
        paired: records.iter().filter(|r| r.is_paired()).count(),
        unmatched_predictions: records.iter().filter(|r| r.gold.is_none()).count(),
        missed_gold: records.iter().filter(|r| r.pred.is_none()).count(),
        near_misses: records.iter().filter(|r| r.near_miss).count(),
        histogram: error_histogram(&records, schema),
        polarity_confusion: polarity_confusion(&records),
        review_sample: sample.iter().map(|&i| predictions[i].index).collect(),
    };
    Analysis {
        summary,
        records,
        review: review_items,
    }
}

/// Everything derived from the predictions of all passes.
struct Evaluation {
    report: EvalReport,
    analysis: Analysis,
}

fn assemble(echo: ConfigEcho, manifest: String, schema: &TaskSchema, runs: &[Vec<Prediction>]) -> Evaluation {
    let entries: Vec<RunEntry> = runs
        .iter()
        .enumerate()
        .map(|(i, preds)| RunEntry {
            run: i + 1,
            seed: echo.seeds.get(i).copied().unwrap_or(i as u64),
            metrics: score_run(preds.iter().map(|p| p.counts)),
            responses_with_diagnostics: preds.iter().filter(|p| !p.diagnostics.is_empty()).count(),
        })
        .collect();
    let metrics: Vec<RunMetrics> = entries.iter().map(|e| e.metrics).collect();
    let aggregate = aggregate(&metrics).expect("at least one run");

    let mut diagnostics = DiagnosticsSummary::default();
    for p in runs.iter().flatten() {
        if !p.diagnostics.is_empty() {
            diagnostics.responses_with_diagnostics += 1;
        }
        for d in &p.diagnostics {
            *diagnostics.by_kind.entry(d.kind).or_default() += 1;
        }
    }

    let best = entries
        .iter()
        .enumerate()
        .fold(0, |best, (i, e)| if e.metrics.f1 > entries[best].metrics.f1 { i } else { best });
    let analysis = analyze_predictions(&runs[best], best + 1, schema, &echo.policy, echo.review);

    let first = &runs[0];
    let report = EvalReport {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        sentences: first.len(),
        gold_tuples: first.iter().map(|p| p.gold.len()).sum(),
        config: echo,
        dataset_manifest: manifest,
        split: Split::Test,
        runs: entries,
        aggregate,
        diagnostics,
        analysis: analysis.summary.clone(),
    };
    Evaluation { report, analysis }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn write_predictions(out: &Path, run: usize, predictions: &[Prediction]) -> Result<(), RunError> {
    write_file(&run_dir(out, run).join(PREDICTIONS_JSONL), &jsonl(predictions))
}

pub fn load_predictions(out: &Path, run: usize) -> Result<Vec<Prediction>, RunError> {
    let path = run_dir(out, run).join(PREDICTIONS_JSONL);
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut predictions = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let p = serde_json::from_str(&line).map_err(|e| RunError::Artifact {
            path: path.clone(),
            detail: format!("line {}: {e}", n + 1),
        })?;
        predictions.push(p);
    }
    Ok(predictions)
}

fn write_artifacts(out: &Path, eval: &Evaluation) -> Result<(), RunError> {
    let report = &eval.report;
    let mut histogram = Vec::new();
    report
        .analysis
        .histogram
        .write_csv(&mut histogram)
        .expect("writing to memory");
    let mut errors = Vec::new();
    write_records_jsonl(&eval.analysis.records, &mut errors).expect("writing to memory");
    let mut review = serde_json::to_vec_pretty(&eval.analysis.review).expect("serializable");
    review.push(b'\n');

    write_file(&out.join(HISTOGRAM_CSV), &histogram)?;
    write_file(&out.join(ERRORS_JSONL), &errors)?;
    write_file(&out.join(REVIEW_JSON), &review)?;
    write_file(&out.join(REPORT_TXT), render_run_report(report).as_bytes())?;
    write_file(&out.join(REPORT_JSON), report.to_json().as_bytes())
}

/// Runs an experiment against the HTTP endpoint named in the config.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport, RunError> {
    cfg.validate()?;
    let client = Client::http(cfg.endpoint.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    execute(cfg, client)
}

/// Runs an experiment through a caller-supplied transport, such as a mock.
pub fn run_eval_with(cfg: &RunConfig, transport: Arc<dyn Transport>) -> Result<EvalReport, RunError> {
    cfg.validate()?;
    let client = Client::new(cfg.endpoint.clone(), transport).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    execute(cfg, client)
}

fn execute(cfg: &RunConfig, client: Client) -> Result<EvalReport, RunError> {
    let out = &cfg.output.dir;
    let cache_dir = cfg.output.cache_dir();
    let cache = ResponseCache::open(&cache_dir).map_err(io_err(&cache_dir))?;
    let client = client.with_cache(cache).offline(cfg.output.offline);

    let schema = TaskSchema::for_task(cfg.task);
    let options = LoadOptions {
        vocabulary: cfg.dataset.vocabulary_source()?,
    };
    let bundle = load_dataset_with(&cfg.dataset.path, cfg.dataset.adapter, &schema, &cfg.dataset.name, &options)
        .map_err(|source| RunError::Ingest {
            name: cfg.dataset.name.clone(),
            source,
        })?;
    let manifest = dataset_manifest(&bundle);

    let k = cfg.shots.demonstrations();
    let prompts = bundle
        .test
        .iter()
        .map(|s| build_package(&schema, &bundle.categories, &bundle.train, k, &s.text).map(|p| p.render()))
        .collect::<Result<Vec<_>, _>>()?;
    log::info!(
        "{} {}: {} prompts, {} demonstration(s), {} run(s)",
        cfg.task,
        cfg.dataset.name,
        prompts.len(),
        k,
        cfg.runs
    );

    let scoring = Scoring {
        schema: &schema,
        policy: &cfg.policy,
        matching: cfg.matching,
    };
    let mut runs = Vec::with_capacity(cfg.runs);
    for (i, seed) in cfg.resolved_seeds().into_iter().enumerate() {
        let run = i + 1;
        let results = client.batch_complete_prompts(&prompts, Some(seed));
        let mut predictions = Vec::with_capacity(results.len());
        let mut failure = None;
        for (index, (sentence, result)) in bundle.test.iter().zip(results).enumerate() {
            match result {
                Ok(record) => predictions.push(scoring.predict(index, sentence, Some(record.digest), Some(record.response))),
                Err(e) => {
                    let mut p = scoring.predict(index, sentence, None, None);
                    p.error = Some(e.to_string());
                    predictions.push(p);
                    failure.get_or_insert((index, e));
                }
            }
        }
        // Persist before bailing out so completed work is not lost.
        write_predictions(out, run, &predictions)?;
        if let Some((sentence, source)) = failure {
            return Err(RunError::Client { run, sentence, source });
        }
        log::info!("run {run} (seed {seed}) complete");
        runs.push(predictions);
    }

    let eval = assemble(cfg.echo(), manifest, &schema, &runs);
    write_artifacts(out, &eval)?;
    Ok(eval.report)
}

/// Overrides applied when re-scoring persisted responses.
#[derive(Debug, Clone, Copy, Default)]
pub struct RescoreOptions {
    pub policy: Option<CanonicalizationPolicy>,
    pub matching: Option<Matching>,
}

/// Re-parses and re-scores the responses stored in `out` and rewrites every
/// derived artifact. No endpoint is contacted.
pub fn rescore(out: &Path, options: RescoreOptions) -> Result<EvalReport, RunError> {
    let previous = EvalReport::load(out)?;
    let mut echo = previous.config;
    if let Some(p) = options.policy {
        echo.policy = p;
    }
    if let Some(m) = options.matching {
        echo.matching = m;
    }
    let schema = TaskSchema::for_task(echo.task);
    let scoring = Scoring {
        schema: &schema,
        policy: &echo.policy,
        matching: echo.matching,
    };
    let mut runs = Vec::with_capacity(echo.runs);
    for run in 1..=echo.runs {
        let stored = load_predictions(out, run)?;
        let predictions: Vec<Prediction> = stored
            .into_iter()
            .map(|p| {
                let sentence = AnnotatedSentence::new(p.text, p.gold);
                let mut fresh = scoring.predict(p.index, &sentence, p.digest, p.response);
                fresh.error = p.error;
                fresh
            })
            .collect();
        if let Some(failed) = predictions.iter().find(|p| p.error.is_some()) {
            return Err(RunError::Artifact {
                path: run_dir(out, run),
                detail: format!("sentence {} has no response: {}", failed.index, failed.error.as_deref().unwrap_or("")),
            });
        }
        write_predictions(out, run, &predictions)?;
        runs.push(predictions);
    }
    let eval = assemble(echo, previous.dataset_manifest, &schema, &runs);
    write_artifacts(out, &eval)?;
    Ok(eval.report)
}

/// Error analysis of one stored pass; `None` picks the pass the report
/// analyzed.
pub fn analyze_run(out: &Path, run: Option<usize>) -> Result<Analysis, RunError> {
    let report = EvalReport::load(out)?;
    let run = run.unwrap_or(report.analysis.run);
    let predictions = load_predictions(out, run)?;
    let schema = TaskSchema::for_task(report.config.task);
    Ok(analyze_predictions(
        &predictions,
        run,
        &schema,
        &report.config.policy,
        report.config.review,
    ))
}
