//! Dataset loading, validation, split statistics and content digests.
//!
//! Three on-disk layouts are understood:
//!
//! - `canonical-jsonl`: one `{"text": ..., "tuples": [{"aspect", "category",
//!   "polarity", "opinion"}]}` object per line, `"null"` for implicit terms,
//!   absent keys for elements the task lacks.
//! - `sep-line`: `sentence####[...]` with a Python literal label list.
//!   Quadruples are `[aspect, category, polarity, opinion]`, TASD triples
//!   `[aspect, category, polarity]`, ASTE triples `(aspect, opinion,
//!   polarity)` where terms may be token-index lists.
//! - `acos-tsv`: `sentence\tA_S,A_E CATEGORY#SUB POL O_S,O_E\t...` with
//!   end-exclusive token spans, `-1,-1` for implicit and polarity 0/1/2 for
//!   negative/neutral/positive.
//!
//! Each split lives in its own file, named `<split>.<ext>` or any file whose
//! name contains the split name.

mod pylit;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{
    validate_tuple, AnnotatedSentence, CategoryLabel, CategoryVocabulary, DatasetBundle, Polarity,
    SentimentTuple, Split, TaskSchema, TermSpan, UnknownValue, Violation, RESTAURANT_CATEGORIES,
};
use pylit::PyValue;

/// Name of an optional vocabulary file inside a dataset directory, one
/// category per line.
pub const CATEGORIES_FILE: &str = "categories.txt";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no {split} split found in {dir}")]
    MissingSplit { split: Split, dir: PathBuf },
    #[error("{path}:{line}: malformed record: {detail}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path}:{line}: record violates the schema ({}): {record}", fmt_violations(.violations))]
    SchemaViolation {
        path: PathBuf,
        line: usize,
        record: String,
        violations: Vec<Violation>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatAdapter {
    CanonicalJsonl,
    SepLine,
    AcosTsv,
}

impl FormatAdapter {
    pub fn as_str(self) -> &'static str {
        match self {
            FormatAdapter::CanonicalJsonl => "canonical-jsonl",
            FormatAdapter::SepLine => "sep-line",
            FormatAdapter::AcosTsv => "acos-tsv",
        }
    }

    fn extensions(self) -> &'static [&'static str] {
        match self {
            FormatAdapter::CanonicalJsonl => &["jsonl", "json"],
            FormatAdapter::SepLine => &["txt"],
            FormatAdapter::AcosTsv => &["tsv"],
        }
    }
}

impl fmt::Display for FormatAdapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatAdapter {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "canonical-jsonl" | "jsonl" => Ok(FormatAdapter::CanonicalJsonl),
            "sep-line" => Ok(FormatAdapter::SepLine),
            "acos-tsv" => Ok(FormatAdapter::AcosTsv),
            _ => Err(UnknownValue {
                what: "adapter",
                value: s.to_string(),
            }),
        }
    }
}

/// Where the category vocabulary comes from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VocabularySource {
    /// `categories.txt` when present; otherwise the fixed restaurant list when
    /// every training category belongs to it; otherwise training categories.
    #[default]
    Auto,
    Train,
    Restaurant,
    File(PathBuf),
}

impl FromStr for VocabularySource {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "auto" => VocabularySource::Auto,
            "train" => VocabularySource::Train,
            "restaurant" => VocabularySource::Restaurant,
            "" => {
                return Err(UnknownValue {
                    what: "vocabulary source",
                    value: s.into(),
                })
            }
            path => VocabularySource::File(PathBuf::from(path)),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub vocabulary: VocabularySource,
}

/// Loads a dataset with automatic vocabulary selection.
pub fn load_dataset(
    dir: &Path,
    adapter: FormatAdapter,
    schema: &TaskSchema,
    name: &str,
) -> Result<DatasetBundle, IngestError> {
    load_dataset_with(dir, adapter, schema, name, &LoadOptions::default())
}

pub fn load_dataset_with(
    dir: &Path,
    adapter: FormatAdapter,
    schema: &TaskSchema,
    name: &str,
    options: &LoadOptions,
) -> Result<DatasetBundle, IngestError> {
    let mut records = Vec::with_capacity(3);
    for split in Split::ALL {
        let path = find_split_file(dir, adapter, split)?;
        let sentences = read_split(&path, adapter, schema)?;
        records.push((path, sentences));
    }

    let vocab = if schema.has_category {
        build_vocabulary(dir, &records[0].1, &options.vocabulary)?
    } else {
        CategoryVocabulary::default()
    };

    for (index, (path, sentences)) in records.iter().enumerate() {
        let check_vocab = index == 0;
        for (line, s) in sentences {
            let mut violations = Vec::new();
            for t in &s.gold {
                for v in validate_tuple(t, schema, &vocab) {
                    // Dev/test may legitimately hold categories unseen in training.
                    if check_vocab || !matches!(v, Violation::UnknownCategory(_)) {
                        violations.push(v);
                    }
                }
                violations.extend(s.substring_violations(t));
            }
            if !violations.is_empty() {
                return Err(IngestError::SchemaViolation {
                    path: path.clone(),
                    line: *line,
                    record: s.text.clone(),
                    violations,
                });
            }
        }
    }

    let mut splits = records
        .into_iter()
        .map(|(_, s)| s.into_iter().map(|(_, s)| s).collect::<Vec<_>>());
    let (train, dev, test) = (
        splits.next().unwrap_or_default(),
        splits.next().unwrap_or_default(),
        splits.next().unwrap_or_default(),
    );
    Ok(DatasetBundle {
        name: name.to_string(),
        schema: schema.clone(),
        train,
        dev,
        test,
        categories: vocab,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn split_aliases(split: Split) -> &'static [&'static str] {
    match split {
        Split::Train => &["train"],
        Split::Dev => &["dev", "valid"],
        Split::Test => &["test"],
    }
}

fn find_split_file(dir: &Path, adapter: FormatAdapter, split: Split) -> Result<PathBuf, IngestError> {
    for ext in adapter.extensions() {
        for alias in split_aliases(split) {
            let exact = dir.join(format!("{alias}.{ext}"));
            if exact.is_file() {
                return Ok(exact);
            }
        }
    }
    let mut candidates: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let ext_ok = p
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| adapter.extensions().contains(&e));
                let stem = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_ascii_lowercase();
                ext_ok && p.is_file() && split_aliases(split).iter().any(|a| stem.contains(a))
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    candidates.sort();
    candidates.into_iter().next().ok_or(IngestError::MissingSplit {
        split,
        dir: dir.to_path_buf(),
    })
}

/// Reads one split file, returning 1-based line numbers with each record.
fn read_split(
    path: &Path,
    adapter: FormatAdapter,
    schema: &TaskSchema,
) -> Result<Vec<(usize, AnnotatedSentence)>, IngestError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let content = content.strip_prefix('\u{feff}').unwrap_or(&content);
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match adapter {
            FormatAdapter::CanonicalJsonl => parse_jsonl(line),
            FormatAdapter::SepLine => parse_sep_line(line, schema),
            FormatAdapter::AcosTsv => parse_acos_tsv(line),
        };
        let sentence = parsed.map_err(|detail| IngestError::MalformedRecord {
            path: path.to_path_buf(),
            line: line_no,
            detail,
        })?;
        out.push((line_no, sentence));
    }
    if out.is_empty() {
        return Err(IngestError::MalformedRecord {
            path: path.to_path_buf(),
            line: 0,
            detail: "split file contains no records".into(),
        });
    }
    Ok(out)
}

fn parse_jsonl(line: &str) -> Result<AnnotatedSentence, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

/// `FOOD#QUALITY` becomes `food quality`; plain labels are kept verbatim.
fn normalize_category(raw: &str) -> String {
    if raw.contains('#') {
        raw.trim().replace('#', " ").to_lowercase()
    } else {
        raw.trim().to_string()
    }
}

fn tokens_span(tokens: &[&str], indices: &[i64]) -> Result<TermSpan, String> {
    if indices.is_empty() || indices.iter().any(|i| *i < 0) {
        return Ok(TermSpan::Implicit);
    }
    let lo = *indices.iter().min().expect("non-empty") as usize;
    let hi = *indices.iter().max().expect("non-empty") as usize;
    if hi >= tokens.len() {
        return Err(format!("token index {hi} out of range ({} tokens)", tokens.len()));
    }
    Ok(TermSpan::Explicit(tokens[lo..=hi].join(" ")))
}

fn py_term(value: &PyValue, tokens: &[&str]) -> Result<TermSpan, String> {
    match value {
        PyValue::Str(s) => Ok(TermSpan::from_wire(s)),
        PyValue::None => Ok(TermSpan::Implicit),
        PyValue::Seq(items) => {
            let idx = items
                .iter()
                .map(|v| match v {
                    PyValue::Int(i) => Ok(*i),
                    other => Err(format!("expected token index, found {other:?}")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            tokens_span(tokens, &idx)
        }
        PyValue::Int(i) => tokens_span(tokens, &[*i]),
    }
}

fn py_str(value: &PyValue) -> Result<&str, String> {
    match value {
        PyValue::Str(s) => Ok(s),
        other => Err(format!("expected a string, found {other:?}")),
    }
}

fn parse_sep_line(line: &str, schema: &TaskSchema) -> Result<AnnotatedSentence, String> {
    let (text, labels) = line
        .split_once("####")
        .ok_or_else(|| "missing `####` separator".to_string())?;
    let text = text.trim();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let PyValue::Seq(items) = pylit::parse(labels.trim())? else {
        return Err("label part is not a list".into());
    };
    let mut gold = Vec::with_capacity(items.len());
    for item in &items {
        let PyValue::Seq(fields) = item else {
            return Err(format!("label entry is not a tuple: {item:?}"));
        };
        if fields.len() != schema.arity() {
            return Err(format!(
                "label entry has {} elements, {} expected",
                fields.len(),
                schema.arity()
            ));
        }
        let polarity = |v: &PyValue| -> Result<Polarity, String> {
            py_str(v)?.parse().map_err(|e: UnknownValue| e.to_string())
        };
        let category = |v: &PyValue| -> Result<CategoryLabel, String> {
            Ok(CategoryLabel(normalize_category(py_str(v)?)))
        };
        let tuple = match (schema.has_category, schema.has_opinion) {
            (true, true) => SentimentTuple {
                aspect: py_term(&fields[0], &tokens)?,
                category: Some(category(&fields[1])?),
                polarity: polarity(&fields[2])?,
                opinion: Some(py_term(&fields[3], &tokens)?),
            },
            (true, false) => SentimentTuple {
                aspect: py_term(&fields[0], &tokens)?,
                category: Some(category(&fields[1])?),
                polarity: polarity(&fields[2])?,
                opinion: None,
            },
            _ => SentimentTuple {
                aspect: py_term(&fields[0], &tokens)?,
                category: None,
                polarity: polarity(&fields[2])?,
                opinion: Some(py_term(&fields[1], &tokens)?),
            },
        };
        gold.push(tuple);
    }
    Ok(AnnotatedSentence::new(text, gold))
}

fn parse_span(raw: &str, tokens: &[&str]) -> Result<TermSpan, String> {
    let (s, e) = raw
        .split_once(',')
        .ok_or_else(|| format!("bad span {raw:?}"))?;
    let s: i64 = s.trim().parse().map_err(|_| format!("bad span {raw:?}"))?;
    let e: i64 = e.trim().parse().map_err(|_| format!("bad span {raw:?}"))?;
    if s < 0 || e < 0 {
        return Ok(TermSpan::Implicit);
    }
    if e <= s {
        return Err(format!("empty span {raw:?}"));
    }
    tokens_span(tokens, &[s, e - 1])
}

fn parse_acos_tsv(line: &str) -> Result<AnnotatedSentence, String> {
    let mut cols = line.split('\t');
    let text = cols.next().unwrap_or_default().trim();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut gold = Vec::new();
    for quad in cols.map(str::trim).filter(|c| !c.is_empty()) {
        let parts: Vec<&str> = quad.split_whitespace().collect();
        let [aspect, category, polarity, opinion] = parts[..] else {
            return Err(format!("expected 4 fields in {quad:?}"));
        };
        let polarity = match polarity {
            "0" => Polarity::Negative,
            "1" => Polarity::Neutral,
            "2" => Polarity::Positive,
            other => other.parse().map_err(|e: UnknownValue| e.to_string())?,
        };
        gold.push(SentimentTuple {
            aspect: parse_span(aspect, &tokens)?,
            category: Some(CategoryLabel(normalize_category(category))),
            polarity,
            opinion: Some(parse_span(opinion, &tokens)?),
        });
    }
    Ok(AnnotatedSentence::new(text, gold))
}

fn read_vocabulary_file(path: &Path) -> Result<CategoryVocabulary, IngestError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(CategoryVocabulary::new(
        content.lines().map(str::trim).filter(|l| !l.is_empty()),
    ))
}

/// Declared vocabulary (in its own order) followed by any further training
/// categories. Without a declared list the result is sorted.
fn build_vocabulary(
    dir: &Path,
    train: &[(usize, AnnotatedSentence)],
    source: &VocabularySource,
) -> Result<CategoryVocabulary, IngestError> {
    let train_labels: Vec<CategoryLabel> = train
        .iter()
        .flat_map(|(_, s)| s.gold.iter().filter_map(|t| t.category.clone()))
        .collect();
    let declared = match source {
        VocabularySource::Train => None,
        VocabularySource::Restaurant => Some(CategoryVocabulary::restaurant()),
        VocabularySource::File(path) => Some(read_vocabulary_file(path)?),
        VocabularySource::Auto => {
            let file = dir.join(CATEGORIES_FILE);
            if file.is_file() {
                Some(read_vocabulary_file(&file)?)
            } else if train_labels
                .iter()
                .all(|c| RESTAURANT_CATEGORIES.contains(&c.as_str()))
            {
                Some(CategoryVocabulary::restaurant())
            } else {
                None
            }
        }
    };
    Ok(match declared {
        Some(mut vocab) => {
            let mut extra: Vec<CategoryLabel> =
                train_labels.into_iter().filter(|c| !vocab.contains(c)).collect();
            extra.sort();
            for label in extra {
                vocab.push(label);
            }
            vocab
        }
        None => CategoryVocabulary::new(train_labels.into_iter().map(|c| c.0)).sorted(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityCounts {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

impl PolarityCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.neutral
    }
}

impl fmt::Display for PolarityCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.positive, self.negative, self.neutral)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub sentences: usize,
    pub tuples: usize,
    /// Distinct categories used by the split's gold tuples.
    pub categories: usize,
    pub polarity_counts: PolarityCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
}

impl DatasetStats {
    pub fn get(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

pub fn split_stats(sentences: &[AnnotatedSentence]) -> SplitStats {
    let mut stats = SplitStats {
        sentences: sentences.len(),
        ..SplitStats::default()
    };
    let mut categories = std::collections::HashSet::new();
    for t in sentences.iter().flat_map(|s| &s.gold) {
        stats.tuples += 1;
        match t.polarity {
            Polarity::Positive => stats.polarity_counts.positive += 1,
            Polarity::Negative => stats.polarity_counts.negative += 1,
            Polarity::Neutral => stats.polarity_counts.neutral += 1,
        }
        if let Some(c) = &t.category {
            categories.insert(c);
        }
    }
    stats.categories = categories.len();
    stats
}

pub fn compute_stats(bundle: &DatasetBundle) -> DatasetStats {
    DatasetStats {
        train: split_stats(&bundle.train),
        dev: split_stats(&bundle.dev),
        test: split_stats(&bundle.test),
    }
}

/// Hex SHA-256 over the task, vocabulary and every record, with each
/// sentence's tuples sorted so annotation order does not matter.
pub fn dataset_manifest(bundle: &DatasetBundle) -> String {
    #[derive(Serialize)]
    struct Record<'a> {
        text: &'a str,
        tuples: Vec<&'a SentimentTuple>,
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        task: crate::types::Task,
        categories: &'a CategoryVocabulary,
        splits: Vec<(Split, Vec<Record<'a>>)>,
    }
    let manifest = Manifest {
        task: bundle.schema.task,
        categories: &bundle.categories,
        splits: Split::ALL
            .iter()
            .map(|split| {
                let records = bundle
                    .split(*split)
                    .iter()
                    .map(|s| {
                        let mut tuples: Vec<&SentimentTuple> = s.gold.iter().collect();
                        tuples.sort();
                        Record { text: &s.text, tuples }
                    })
                    .collect();
                (*split, records)
            })
            .collect(),
    };
    let bytes = serde_json::to_vec(&manifest).expect("manifest serializes");
    hex::encode(Sha256::digest(&bytes))
}
