//! Exact-match micro precision, recall and F1.
//!
//! Metric types are generic over the float type; the crate root exposes the
//! `f64` instantiations used by the rest of the harness.

use std::collections::{HashMap, HashSet};
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{canonicalize, CanonicalizationPolicy};
use crate::types::SentimentTuple;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("cannot aggregate an empty list of runs")]
    EmptyRunList,
}

/// True positive, false positive and false negative tuple counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Counts { tp, fp, fn_ }
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, rhs: Counts) -> Counts {
        Counts::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        *self = *self + rhs;
    }
}

impl Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// How repeated tuples are counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Both sides are deduplicated before counting.
    #[default]
    Set,
    Multiset,
}

/// Scores one sentence with set semantics.
pub fn score_sentence(
    pred: &[SentimentTuple],
    gold: &[SentimentTuple],
    policy: &CanonicalizationPolicy,
) -> Counts {
    score_sentence_with(pred, gold, policy, Matching::Set)
}

pub fn score_sentence_with(
    pred: &[SentimentTuple],
    gold: &[SentimentTuple],
    policy: &CanonicalizationPolicy,
    matching: Matching,
) -> Counts {
    let canon = |ts: &[SentimentTuple]| -> Vec<SentimentTuple> {
        ts.iter().map(|t| canonicalize(t, policy)).collect()
    };
    let pred = canon(pred);
    let gold = canon(gold);
    match matching {
        Matching::Set => {
            let p: HashSet<_> = pred.into_iter().collect();
            let g: HashSet<_> = gold.into_iter().collect();
            let tp = p.intersection(&g).count();
            Counts::new(tp, p.len() - tp, g.len() - tp)
        }
        Matching::Multiset => {
            let mut bag: HashMap<&SentimentTuple, usize> = HashMap::new();
            for t in &gold {
                *bag.entry(t).or_default() += 1;
            }
            let mut tp = 0;
            for t in &pred {
                if let Some(n) = bag.get_mut(t) {
                    if *n > 0 {
                        *n -= 1;
                        tp += 1;
                    }
                }
            }
            Counts::new(tp, pred.len() - tp, gold.len() - tp)
        }
    }
}

fn ratio<T: Float>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        cast::<T>(num) / cast::<T>(den)
    }
}

fn cast<T: Float>(n: usize) -> T {
    T::from(n).expect("count fits in the float type")
}

/// Micro metrics for one full pass over a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics<T> {
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Float> RunMetrics<T> {
    /// Zero denominators yield zero rather than NaN.
    pub fn from_counts(counts: Counts) -> Self {
        let precision: T = ratio(counts.tp, counts.tp + counts.fp);
        let recall: T = ratio(counts.tp, counts.tp + counts.fn_);
        let sum = precision + recall;
        let f1 = if sum == T::zero() {
            T::zero()
        } else {
            (T::one() + T::one()) * precision * recall / sum
        };
        RunMetrics {
            counts,
            precision,
            recall,
            f1,
        }
    }
}

/// Sums per-sentence counts, then applies the metric formulas.
pub fn score_run<T: Float>(counts: impl IntoIterator<Item = Counts>) -> RunMetrics<T> {
    RunMetrics::from_counts(counts.into_iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics<T> {
    pub mean_precision: T,
    pub mean_recall: T,
    pub mean_f1: T,
    /// Sample standard deviation; zero for a single run.
    pub stddev_f1: T,
    pub runs: usize,
}

pub fn aggregate<T: Float>(runs: &[RunMetrics<T>]) -> Result<AggregateMetrics<T>, ScoreError> {
    if runs.is_empty() {
        return Err(ScoreError::EmptyRunList);
    }
    let n: T = cast(runs.len());
    let mean = |f: fn(&RunMetrics<T>) -> T| runs.iter().map(f).fold(T::zero(), |a, b| a + b) / n;
    let mean_f1 = mean(|r| r.f1);
    let stddev_f1 = if runs.len() < 2 {
        T::zero()
    } else {
        let ss = runs
            .iter()
            .map(|r| (r.f1 - mean_f1).powi(2))
            .fold(T::zero(), |a, b| a + b);
        (ss / (n - T::one())).sqrt()
    };
    Ok(AggregateMetrics {
        mean_precision: mean(|r| r.precision),
        mean_recall: mean(|r| r.recall),
        mean_f1,
        stddev_f1,
        runs: runs.len(),
    })
}

/// Formats a ratio as a percentage with two decimals.
pub fn percent<T: Float>(value: T) -> String {
    let v = value.to_f64().unwrap_or(f64::NAN) * 100.0;
    format!("{v:.2}")
}
