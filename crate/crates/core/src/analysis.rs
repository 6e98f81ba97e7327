//! Per-element error attribution for imperfect predictions.
//!
//! Exact matches are removed first. Remaining predictions are paired with
//! remaining gold tuples greedily, fewest differing elements first; ties
//! prefer a matching aspect, then a matching category, then input order. A
//! pair must share at least one element. Unpaired tuples become records with
//! no counterpart and count against every element of the schema.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::{Element, Polarity, SentimentTuple, TaskSchema, TermSpan};

pub const ALIGNMENT_METHOD: &str = "greedy-min-differing-elements";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    /// Index of the sentence within the evaluated split.
    pub sentence: usize,
    pub pred: Option<SentimentTuple>,
    /// Nearest gold tuple, if one could be paired.
    pub gold: Option<SentimentTuple>,
    pub differing: Vec<Element>,
    /// A single term differs and one side contains the other.
    pub near_miss: bool,
}

impl ErrorRecord {
    pub fn is_paired(&self) -> bool {
        self.pred.is_some() && self.gold.is_some()
    }
}

fn dedup(ts: &[SentimentTuple]) -> Vec<&SentimentTuple> {
    let mut seen = HashSet::new();
    ts.iter().filter(|t| seen.insert(*t)).collect()
}

fn differing(pred: &SentimentTuple, gold: &SentimentTuple, schema: &TaskSchema) -> Vec<Element> {
    schema.elements().filter(|e| !pred.agrees_on(gold, *e)).collect()
}

fn contains_either(a: &TermSpan, b: &TermSpan) -> bool {
    match (a.text(), b.text()) {
        (Some(a), Some(b)) => a.contains(b) || b.contains(a),
        _ => false,
    }
}

fn is_near_miss(pred: &SentimentTuple, gold: &SentimentTuple, diff: &[Element]) -> bool {
    match diff {
        [Element::Aspect] => contains_either(&pred.aspect, &gold.aspect),
        [Element::Opinion] => match (&pred.opinion, &gold.opinion) {
            (Some(p), Some(g)) => contains_either(p, g),
            _ => false,
        },
        _ => false,
    }
}

/// Aligns one sentence's predictions with its gold tuples. Inputs are
/// expected to be canonicalized already.
pub fn align_errors(
    sentence: usize,
    pred: &[SentimentTuple],
    gold: &[SentimentTuple],
    schema: &TaskSchema,
) -> Vec<ErrorRecord> {
    let pred = dedup(pred);
    let gold = dedup(gold);
    let pred_set: HashSet<_> = pred.iter().copied().collect();
    let gold_set: HashSet<_> = gold.iter().copied().collect();
    let pred: Vec<_> = pred.into_iter().filter(|t| !gold_set.contains(t)).collect();
    let gold: Vec<_> = gold.into_iter().filter(|t| !pred_set.contains(t)).collect();

    let arity = schema.arity();
    let mut candidates = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gold.iter().enumerate() {
            let diff = differing(p, g, schema);
            if diff.len() < arity {
                let key = (
                    diff.len(),
                    !p.agrees_on(g, Element::Aspect),
                    schema.has_category && !p.agrees_on(g, Element::Category),
                    i,
                    j,
                );
                candidates.push((key, diff));
            }
        }
    }
    candidates.sort_by_key(|c| c.0);

    let mut pred_match: Vec<Option<(usize, Vec<Element>)>> = vec![None; pred.len()];
    let mut gold_used = vec![false; gold.len()];
    for ((_, _, _, i, j), diff) in candidates {
        if pred_match[i].is_none() && !gold_used[j] {
            pred_match[i] = Some((j, diff));
            gold_used[j] = true;
        }
    }

    let all: Vec<Element> = schema.elements().collect();
    let mut records = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        records.push(match &pred_match[i] {
            Some((j, diff)) => ErrorRecord {
                sentence,
                pred: Some((*p).clone()),
                gold: Some(gold[*j].clone()),
                near_miss: is_near_miss(p, gold[*j], diff),
                differing: diff.clone(),
            },
            None => ErrorRecord {
                sentence,
                pred: Some((*p).clone()),
                gold: None,
                differing: all.clone(),
                near_miss: false,
            },
        });
    }
    for (j, g) in gold.iter().enumerate() {
        if !gold_used[j] {
            records.push(ErrorRecord {
                sentence,
                pred: None,
                gold: Some((*g).clone()),
                differing: all.clone(),
                near_miss: false,
            });
        }
    }
    records
}

/// Error counts per sentiment element, restricted to a schema's elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorHistogram(pub BTreeMap<Element, usize>);

impl ErrorHistogram {
    pub fn get(&self, element: Element) -> Option<usize> {
        self.0.get(&element).copied()
    }

    pub fn elements(&self) -> Vec<Element> {
        self.0.keys().copied().collect()
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "element,count")?;
        for (element, count) in &self.0 {
            writeln!(out, "{element},{count}")?;
        }
        Ok(())
    }
}

pub fn error_histogram(records: &[ErrorRecord], schema: &TaskSchema) -> ErrorHistogram {
    let mut counts: BTreeMap<Element, usize> = schema.elements().map(|e| (e, 0)).collect();
    for r in records {
        for e in &r.differing {
            if let Some(c) = counts.get_mut(e) {
                *c += 1;
            }
        }
    }
    ErrorHistogram(counts)
}

/// Gold polarity (rows) against predicted polarity (columns), in the order
/// positive, negative, neutral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityConfusion {
    pub counts: [[usize; 3]; 3],
}

impl PolarityConfusion {
    pub fn get(&self, gold: Polarity, pred: Polarity) -> usize {
        self.counts[gold.index()][pred.index()]
    }

    pub fn row_sum(&self, gold: Polarity) -> usize {
        self.counts[gold.index()].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn polarity_confusion(records: &[ErrorRecord]) -> PolarityConfusion {
    let mut m = PolarityConfusion::default();
    for r in records {
        if let (Some(p), Some(g)) = (&r.pred, &r.gold) {
            if r.differing.contains(&Element::Polarity) {
                m.counts[g.polarity.index()][p.polarity.index()] += 1;
            }
        }
    }
    m
}

/// Deterministic sample of sentence indices for manual review, sorted
/// ascending. `n` is clamped to the split size.
pub fn sample_for_review(split_len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, split_len, n.min(split_len)).into_vec();
    picked.sort_unstable();
    picked
}

pub fn write_records_jsonl<W: Write>(records: &[ErrorRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
