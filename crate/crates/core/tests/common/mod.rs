//! Synthetic datasets for integration tests.

#![allow(dead_code)]

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use absa_eval::{AnnotatedSentence, CategoryLabel, Polarity, SentimentTuple, Task, TermSpan};

const ASPECTS: [(&str, &str); 10] = [
    ("pizza", "food quality"),
    ("service", "service general"),
    ("wine list", "drinks style_options"),
    ("staff", "service general"),
    ("decor", "ambience general"),
    ("pasta", "food quality"),
    ("prices", "restaurant prices"),
    ("location", "location general"),
    ("dessert", "food quality"),
    ("cocktails", "drinks quality"),
];

const OPINIONS: [&str; 10] = [
    "great", "too mild", "slow", "friendly", "overpriced", "cozy", "bland", "fresh", "worth it", "noisy",
];

fn polarity(rng: &mut ChaCha8Rng) -> Polarity {
    *Polarity::ALL.choose(rng).expect("non-empty")
}

/// One sentence with one to three tuples over distinct aspects.
pub fn sentence(task: Task, rng: &mut ChaCha8Rng) -> AnnotatedSentence {
    let n = rng.gen_range(1..=3);
    let mut aspects = ASPECTS.to_vec();
    aspects.shuffle(rng);
    let mut clauses = Vec::new();
    let mut gold = Vec::new();
    for (i, (aspect, category)) in aspects.into_iter().take(n).enumerate() {
        let opinion = OPINIONS[rng.gen_range(0..OPINIONS.len())];
        let implicit_aspect = task != Task::Aste && i == 0 && rng.gen_bool(0.15);
        let implicit_opinion = matches!(task, Task::Asqp | Task::Acos) && rng.gen_bool(0.1);
        let (clause, a, o) = match (implicit_aspect, implicit_opinion) {
            (true, _) => (format!("it was {opinion}"), TermSpan::Implicit, TermSpan::explicit(opinion)),
            (false, true) => (format!("the {aspect} came out"), TermSpan::explicit(aspect), TermSpan::Implicit),
            (false, false) => (format!("the {aspect} was {opinion}"), TermSpan::explicit(aspect), TermSpan::explicit(opinion)),
        };
        clauses.push(clause);
        let p = polarity(rng);
        let tuple = match task {
            Task::Asqp | Task::Acos => SentimentTuple {
                aspect: a,
                category: Some(CategoryLabel::new(category)),
                polarity: p,
                opinion: Some(o),
            },
            Task::Tasd => SentimentTuple {
                aspect: a,
                category: Some(CategoryLabel::new(category)),
                polarity: p,
                opinion: None,
            },
            Task::Aste => SentimentTuple {
                aspect: a,
                category: None,
                polarity: p,
                opinion: Some(o),
            },
        };
        if !gold.contains(&tuple) {
            gold.push(tuple);
        }
    }
    let mut text = clauses.join(" and ");
    text.push_str(" .");
    AnnotatedSentence::new(text, gold)
}

/// Writes `train.jsonl`, `dev.jsonl` and `test.jsonl` under `dir`.
pub fn write_dataset(dir: &Path, task: Task, seed: u64, sizes: [usize; 3]) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    fs::create_dir_all(dir).unwrap();
    for (name, n) in ["train", "dev", "test"].into_iter().zip(sizes) {
        let mut body = String::new();
        let mut written = 0;
        while written < n {
            // Texts are unique so a sentence identifies its annotation.
            let s = sentence(task, &mut rng);
            if !seen.insert(s.text.clone()) {
                continue;
            }
            body.push_str(&serde_json::to_string(&s).unwrap());
            body.push('\n');
            written += 1;
        }
        fs::write(dir.join(format!("{name}.jsonl")), body).unwrap();
    }
    dir.to_path_buf()
}
