//! Wires ingestion, prompting, completion, parsing, scoring and analysis
//! into experiments, and renders their reports.

mod config;
mod report;
mod run;

pub use config::{
    canonical_dataset_name, is_known_combination, ConfigEcho, ConfigError, DatasetConfig, OutputConfig,
    ReviewConfig, RunConfig, ShotSetting, DEFAULT_REVIEW_SIZE, DEFAULT_RUNS, KNOWN_COMBINATIONS,
};
pub use report::{render_run_report, report_table, Column, ReportTable, TableError, TableRow};
pub use run::{
    analyze_predictions, analyze_run, load_predictions, rescore, run_dir, run_eval, run_eval_with, Analysis,
    AnalysisSummary, DiagnosticsSummary, EvalReport, Prediction, RescoreOptions, ReviewItem, RunEntry, RunError,
    ERRORS_JSONL, HISTOGRAM_CSV, PREDICTIONS_JSONL, REPORT_JSON, REPORT_TXT, REVIEW_JSON, TOOL_NAME, TOOL_VERSION,
};
