//! Experiment configuration: one TOML file per experiment, with CLI flags
//! layered on top.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::client::EndpointConfig;
use crate::ingest::{FormatAdapter, VocabularySource};
use crate::parser::CanonicalizationPolicy;
use crate::prompt::DEFAULT_SHOTS;
use crate::scorer::Matching;
use crate::types::{Task, UnknownValue};

pub const DEFAULT_RUNS: usize = 5;
pub const DEFAULT_REVIEW_SIZE: usize = 50;

/// Task/dataset pairs with a column in the results table, in column order.
/// Each entry is `(task, canonical dataset name, column label)`.
pub const KNOWN_COMBINATIONS: [(Task, &str, &str); 8] = [
    (Task::Asqp, "rest15", "R15"),
    (Task::Asqp, "rest16", "R16"),
    (Task::Acos, "laptop", "Lap"),
    (Task::Acos, "rest", "Rest"),
    (Task::Tasd, "rest15", "R15"),
    (Task::Tasd, "rest16", "R16"),
    (Task::Aste, "rest15", "R15"),
    (Task::Aste, "rest16", "R16"),
];

/// Maps common spellings (`Rest15`, `r15`, `acos-lap`, `laptop_acos`) onto
/// the names used in [`KNOWN_COMBINATIONS`]. Unrecognized names are returned
/// lowercased.
pub fn canonical_dataset_name(name: &str) -> String {
    let lower = name.trim().to_ascii_lowercase().replace(['_', ' '], "-");
    let stripped = lower
        .strip_prefix("acos-")
        .or_else(|| lower.strip_suffix("-acos"))
        .unwrap_or(&lower);
    match stripped {
        "r15" | "rest15" | "res15" | "restaurant15" => "rest15".into(),
        "r16" | "rest16" | "res16" | "restaurant16" => "rest16".into(),
        "lap" | "laptop" | "laptops" => "laptop".into(),
        "rest" | "restaurant" | "restaurants" => "rest".into(),
        other => other.into(),
    }
}

pub fn is_known_combination(task: Task, dataset: &str) -> bool {
    let name = canonical_dataset_name(dataset);
    KNOWN_COMBINATIONS.iter().any(|(t, d, _)| *t == task && *d == name)
}

/// How the query prompt is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShotSetting {
    #[default]
    Zero,
    /// The first `k` training sentences become demonstrations.
    Few(usize),
    /// Zero-shot prompts sent to a fine-tuned model behind the endpoint.
    FineTuned,
}

impl ShotSetting {
    pub fn demonstrations(self) -> usize {
        match self {
            ShotSetting::Few(k) => k,
            ShotSetting::Zero | ShotSetting::FineTuned => 0,
        }
    }

    fn suffix(self) -> Option<&'static str> {
        match self {
            ShotSetting::Zero => Some("zero-shot"),
            ShotSetting::Few(_) => Some("few-shot"),
            ShotSetting::FineTuned => None,
        }
    }
}

impl fmt::Display for ShotSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShotSetting::Zero => f.write_str("zero"),
            ShotSetting::Few(k) => write!(f, "{k}"),
            ShotSetting::FineTuned => f.write_str("fine-tuned"),
        }
    }
}

impl FromStr for ShotSetting {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "zero" | "zero-shot" | "0" => ShotSetting::Zero,
            "few" | "few-shot" => ShotSetting::Few(DEFAULT_SHOTS),
            "fine-tuned" | "finetuned" | "ft" => ShotSetting::FineTuned,
            digits => match digits.parse::<usize>() {
                Ok(0) => ShotSetting::Zero,
                Ok(k) => ShotSetting::Few(k),
                Err(_) => {
                    return Err(UnknownValue {
                        what: "shot setting",
                        value: s,
                    })
                }
            },
        })
    }
}

impl Serialize for ShotSetting {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ShotSetting::Zero => serializer.serialize_u64(0),
            ShotSetting::Few(k) => serializer.serialize_u64(*k as u64),
            ShotSetting::FineTuned => serializer.serialize_str("fine-tuned"),
        }
    }
}

impl<'de> Deserialize<'de> for ShotSetting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u64),
            Name(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Count(0) => Ok(ShotSetting::Zero),
            Repr::Count(k) => Ok(ShotSetting::Few(k as usize)),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_adapter")]
    pub adapter: FormatAdapter,
    /// `auto`, `train`, `restaurant` or a path to a category list.
    #[serde(default)]
    pub vocabulary: Option<String>,
    /// Allows task/dataset pairs outside the known eight.
    #[serde(default)]
    pub user_supplied: bool,
}

fn default_adapter() -> FormatAdapter {
    FormatAdapter::CanonicalJsonl
}

impl DatasetConfig {
    pub fn vocabulary_source(&self) -> Result<VocabularySource, ConfigError> {
        match &self.vocabulary {
            None => Ok(VocabularySource::Auto),
            Some(v) => v.parse().map_err(|e: UnknownValue| ConfigError::Invalid(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReviewConfig {
    /// Sentences sampled for manual inspection.
    pub size: usize,
    pub seed: u64,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            size: DEFAULT_REVIEW_SIZE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Defaults to `<dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Serve every request from the cache; a miss is an endpoint error.
    pub offline: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            cache_dir: None,
            offline: false,
        }
    }
}

impl OutputConfig {
    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.dir.join("cache"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub task: Task,
    #[serde(default)]
    pub shots: ShotSetting,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// One seed per run; empty means `0..runs`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Row label in results tables; derived from model and shots if unset.
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub policy: CanonicalizationPolicy,
    #[serde(default)]
    pub matching: Matching,
    #[serde(default)]
    pub review: ReviewConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

impl RunConfig {
    /// A config with defaults for everything but the dataset and task.
    pub fn new(name: impl Into<String>, path: impl Into<PathBuf>, adapter: FormatAdapter, task: Task) -> Self {
        RunConfig {
            dataset: DatasetConfig {
                name: name.into(),
                path: path.into(),
                adapter,
                vocabulary: None,
                user_supplied: false,
            },
            task,
            shots: ShotSetting::Zero,
            runs: DEFAULT_RUNS,
            seeds: Vec::new(),
            method: None,
            endpoint: EndpointConfig::default(),
            policy: CanonicalizationPolicy::default(),
            matching: Matching::Set,
            review: ReviewConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_path_buf(),
            source,
        })
    }

    /// Reads a TOML file. A relative dataset path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        if cfg.dataset.path.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.dataset.path = parent.join(&cfg.dataset.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(ConfigError::Invalid("runs must be at least 1".into()));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.runs {
            return Err(ConfigError::Invalid(format!(
                "{} seed(s) given for {} run(s)",
                self.seeds.len(),
                self.runs
            )));
        }
        if self.dataset.name.trim().is_empty() {
            return Err(ConfigError::Invalid("dataset name is empty".into()));
        }
        if !self.dataset.user_supplied && !is_known_combination(self.task, &self.dataset.name) {
            return Err(ConfigError::Invalid(format!(
                "{} on dataset {:?} is not a known combination; mark the dataset as user-supplied to run it",
                self.task, self.dataset.name
            )));
        }
        self.dataset.vocabulary_source()?;
        self.endpoint
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn resolved_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.runs as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn method_label(&self) -> String {
        if let Some(m) = &self.method {
            return m.clone();
        }
        match self.shots.suffix() {
            Some(s) => format!("{} ({s})", self.endpoint.model),
            None => self.endpoint.model.clone(),
        }
    }

    /// The parts of the config that determine results. Paths, URLs and
    /// offline mode are left out so a replay reproduces the same report.
    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            method: self.method_label(),
            task: self.task,
            dataset: self.dataset.name.clone(),
            adapter: self.dataset.adapter,
            vocabulary: self.dataset.vocabulary.clone().unwrap_or_else(|| "auto".into()),
            shots: self.shots,
            runs: self.runs,
            seeds: self.resolved_seeds(),
            model: self.endpoint.model.clone(),
            max_tokens: self.endpoint.max_tokens,
            policy: self.policy,
            matching: self.matching,
            review: self.review,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub method: String,
    pub task: Task,
    pub dataset: String,
    pub adapter: FormatAdapter,
    pub vocabulary: String,
    pub shots: ShotSetting,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub model: String,
    pub max_tokens: u32,
    pub policy: CanonicalizationPolicy,
    pub matching: Matching,
    pub review: ReviewConfig,
}
