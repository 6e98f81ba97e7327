//! Human-readable renderings: the per-experiment summary and the
//! methods-by-datasets results grid.

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use super::config::{canonical_dataset_name, KNOWN_COMBINATIONS};
use super::run::EvalReport;
use crate::parser::CanonicalizationPolicy;
use crate::scorer::{percent, Matching};
use crate::types::{Polarity, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Align {
    Left,
    Right,
}

/// Pads every column to its widest cell. The first column is left-aligned,
/// the rest right-aligned.
fn render_grid(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            let align = if c == 0 { Align::Left } else { Align::Right };
            if c > 0 {
                line.push_str("  ");
            }
            let pad = widths[c] - cell.chars().count();
            match align {
                Align::Left => {
                    line.push_str(cell);
                    line.extend(std::iter::repeat_n(' ', pad));
                }
                Align::Right => {
                    line.extend(std::iter::repeat_n(' ', pad));
                    line.push_str(cell);
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn matching_label(m: Matching) -> &'static str {
    match m {
        Matching::Set => "set",
        Matching::Multiset => "multiset",
    }
}

/// The `report.txt` summary of one experiment.
pub fn render_run_report(report: &EvalReport) -> String {
    let cfg = &report.config;
    let mut out = String::new();
    let _ = writeln!(out, "method    {}", cfg.method);
    let _ = writeln!(out, "task      {}", cfg.task);
    let _ = writeln!(out, "dataset   {} ({} sentences, {} gold tuples)", cfg.dataset, report.sentences, report.gold_tuples);
    let _ = writeln!(out, "shots     {}", cfg.shots);
    let _ = writeln!(out, "scoring   {} policy, {} matching", cfg.policy.label(), matching_label(cfg.matching));
    let _ = writeln!(out, "manifest  {}", report.dataset_manifest);
    out.push('\n');

    let mut rows = vec![["run", "seed", "tp", "fp", "fn", "P", "R", "F1"].map(String::from).to_vec()];
    for e in &report.runs {
        let m = &e.metrics;
        rows.push(vec![
            e.run.to_string(),
            e.seed.to_string(),
            m.counts.tp.to_string(),
            m.counts.fp.to_string(),
            m.counts.fn_.to_string(),
            percent(m.precision),
            percent(m.recall),
            percent(m.f1),
        ]);
    }
    let a = &report.aggregate;
    let blank = || String::new();
    rows.push(vec![
        "mean".into(),
        blank(),
        blank(),
        blank(),
        blank(),
        percent(a.mean_precision),
        percent(a.mean_recall),
        percent(a.mean_f1),
    ]);
    rows.push(vec![
        "stddev".into(),
        blank(),
        blank(),
        blank(),
        blank(),
        blank(),
        blank(),
        percent(a.stddev_f1),
    ]);
    out.push_str(&render_grid(&rows));
    out.push('\n');

    let an = &report.analysis;
    let _ = writeln!(
        out,
        "errors in run {} ({} alignment): {} total, {} paired, {} unmatched predictions, {} missed gold, {} near misses",
        an.run, an.alignment_method, an.errors, an.paired, an.unmatched_predictions, an.missed_gold, an.near_misses
    );
    let mut rows = vec![vec!["element".to_string(), "count".to_string()]];
    for (element, count) in &an.histogram.0 {
        rows.push(vec![element.to_string(), count.to_string()]);
    }
    out.push_str(&render_grid(&rows));
    out.push('\n');

    let _ = writeln!(out, "polarity confusion (rows gold, columns predicted)");
    let mut rows = vec![std::iter::once(String::new())
        .chain(Polarity::ALL.iter().map(|p| p.as_str().to_string()))
        .collect::<Vec<_>>()];
    for g in Polarity::ALL {
        let mut row = vec![g.as_str().to_string()];
        row.extend(Polarity::ALL.iter().map(|p| an.polarity_confusion.get(g, *p).to_string()));
        rows.push(row);
    }
    out.push_str(&render_grid(&rows));
    out.push('\n');

    let d = &report.diagnostics;
    let _ = writeln!(out, "parse diagnostics: {} response(s) affected", d.responses_with_diagnostics);
    for (kind, count) in &d.by_kind {
        let name = serde_json::to_value(kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(out, "  {name}: {count}");
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("no reports to tabulate")]
    Empty,
    #[error("reports use different canonicalization policies ({0} and {1})")]
    MixedPolicy(String, String),
    #[error("reports use different matching semantics")]
    MixedMatching,
    #[error("more than one report for {method} on {column}")]
    DuplicateCell { method: String, column: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub task: Task,
    /// Canonical dataset name.
    pub dataset: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: String,
    /// Mean F1 ratios, one per column; `None` renders blank.
    pub cells: Vec<Option<f64>>,
    /// Mean over the cells that are present.
    pub avg: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub columns: Vec<Column>,
    pub rows: Vec<TableRow>,
    pub policy: CanonicalizationPolicy,
    pub matching: Matching,
}

/// Builds a methods-by-datasets grid of mean F1. Known task/dataset pairs
/// come first in their usual order; any others follow sorted.
pub fn report_table(reports: &[EvalReport]) -> Result<ReportTable, TableError> {
    let first = reports.first().ok_or(TableError::Empty)?;
    let policy = first.config.policy;
    let matching = first.config.matching;
    for r in reports {
        if r.config.policy != policy {
            return Err(TableError::MixedPolicy(policy.label(), r.config.policy.label()));
        }
        if r.config.matching != matching {
            return Err(TableError::MixedMatching);
        }
    }

    let key = |r: &EvalReport| (r.config.task, canonical_dataset_name(&r.config.dataset));
    let mut columns: Vec<Column> = KNOWN_COMBINATIONS
        .iter()
        .filter(|(t, d, _)| reports.iter().any(|r| key(r) == (*t, d.to_string())))
        .map(|(t, d, label)| Column {
            task: *t,
            dataset: d.to_string(),
            label: label.to_string(),
        })
        .collect();
    let mut extra: Vec<(Task, String, String)> = reports
        .iter()
        .filter(|r| !columns.iter().any(|c| (c.task, c.dataset.clone()) == key(r)))
        .map(|r| (r.config.task, canonical_dataset_name(&r.config.dataset), r.config.dataset.clone()))
        .collect();
    extra.sort();
    extra.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    columns.extend(extra.into_iter().map(|(task, dataset, label)| Column { task, dataset, label }));

    let mut methods: Vec<String> = Vec::new();
    for r in reports {
        if !methods.contains(&r.config.method) {
            methods.push(r.config.method.clone());
        }
    }
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let mut cells = vec![None; columns.len()];
        for r in reports.iter().filter(|r| r.config.method == method) {
            let (task, dataset) = key(r);
            let c = columns
                .iter()
                .position(|c| c.task == task && c.dataset == dataset)
                .expect("every report has a column");
            if cells[c].is_some() {
                return Err(TableError::DuplicateCell {
                    method,
                    column: format!("{} {}", columns[c].task, columns[c].label),
                });
            }
            cells[c] = Some(r.aggregate.mean_f1);
        }
        let present: Vec<f64> = cells.iter().flatten().copied().collect();
        let avg = present.iter().sum::<f64>() / present.len() as f64;
        rows.push(TableRow {
            method,
            complete: present.len() == cells.len(),
            cells,
            avg,
        });
    }
    Ok(ReportTable {
        columns,
        rows,
        policy,
        matching,
    })
}

impl ReportTable {
    pub fn render(&self) -> String {
        let mut grid = Vec::with_capacity(self.rows.len() + 2);
        let mut tasks = vec!["Method".to_string()];
        tasks.extend(self.columns.iter().map(|c| c.task.to_string()));
        tasks.push("AVG".into());
        let mut datasets = vec![String::new()];
        datasets.extend(self.columns.iter().map(|c| c.label.clone()));
        datasets.push(String::new());
        grid.push(tasks);
        grid.push(datasets);

        let mut partial = false;
        for row in &self.rows {
            let mut line = vec![row.method.clone()];
            line.extend(row.cells.iter().map(|c| c.map_or_else(|| "-".to_string(), percent)));
            let mut avg = percent(row.avg);
            if !row.complete {
                avg.push('*');
                partial = true;
            }
            line.push(avg);
            grid.push(line);
        }
        let mut out = render_grid(&grid);
        let _ = writeln!(
            out,
            "F1 (%), exact match, {} policy, {} matching",
            self.policy.label(),
            matching_label(self.matching)
        );
        if partial {
            out.push_str("* AVG over the datasets present in that row only\n");
        }
        out
    }
}

impl fmt::Display for ReportTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
