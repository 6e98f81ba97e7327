//! Acceptance gate. Prints one PASS/FAIL line per criterion.
//!
//! Dataset statistics need the eight public datasets on disk, laid out as
//! `$ABSA_DATA_DIR/<task>/<dataset>/` (default `<workspace>/data`). When they
//! are absent that criterion reports FAIL with the reason; set
//! `ABSA_REQUIRE_DATA=1` to make the absence fail the process too.

mod common;

use std::collections::HashSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use absa_eval::analysis::{align_errors, error_histogram, ALIGNMENT_METHOD};
use absa_eval::client::mock::{empty_list_responder, EchoGold, MockServer, MockTransport};
use absa_eval::ingest::{compute_stats, load_dataset, FormatAdapter, SplitStats};
use absa_eval::orchestrator::{
    report_table, run_eval, run_eval_with, AnalysisSummary, DiagnosticsSummary, EvalReport, RunConfig, RunEntry,
    ShotSetting, TableError, KNOWN_COMBINATIONS, REPORT_JSON,
};
use absa_eval::parser::{parse_response, parse_response_bytes, ParseMode};
use absa_eval::prompt::{build_package, serialize_tuples};
use absa_eval::scorer::{aggregate, percent, score_sentence_with, Counts, Matching};
use absa_eval::{
    AggregateMetrics, AnnotatedSentence, CanonicalizationPolicy, CategoryLabel, CategoryVocabulary, Element, Polarity,
    RunMetrics, SentimentTuple, Split, Task, TaskSchema, TermSpan,
};

enum Outcome {
    Pass(String),
    Fail(String),
    /// Input files are missing; the criterion could not be evaluated.
    Unavailable(String),
}

type Check = fn() -> Outcome;

fn main() {
    let checks: [(&str, Check); 7] = [
        ("dataset statistics", dataset_statistics),
        ("prompt fidelity", prompt_fidelity),
        ("parser round-trip and fuzz", parser_round_trip_and_fuzz),
        ("scorer oracle", scorer_oracle),
        ("end-to-end mock oracles", end_to_end_oracles),
        ("error-analysis structure", error_analysis_structure),
        ("results table average", results_table_average),
    ];
    let require_data = std::env::var("ABSA_REQUIRE_DATA").is_ok_and(|v| v == "1");
    let mut hard_failures = 0;
    let mut unavailable = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Outcome::Fail(detail) => {
                hard_failures += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
            Outcome::Unavailable(detail) => {
                unavailable += 1;
                println!("FAIL  {name}: not evaluated, {detail} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed, {} not evaluated for lack of input data",
        7 - hard_failures - unavailable,
        hard_failures,
        unavailable
    );
    if hard_failures > 0 || (require_data && unavailable > 0) {
        std::process::exit(1);
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// --- dataset statistics ---------------------------------------------------

/// `(sentences, tuples, categories, [pos, neg, neu])` for train, dev, test.
type Expected = [(usize, usize, usize, [usize; 3]); 3];

const TABLE: [(Task, &str, Expected); 8] = [
    (Task::Asqp, "rest15", [(834, 1354, 13, [1005, 315, 34]), (209, 347, 12, [252, 81, 14]), (537, 795, 12, [453, 305, 37])]),
    (Task::Asqp, "rest16", [(1264, 1989, 12, [1369, 558, 62]), (316, 507, 13, [341, 143, 23]), (544, 799, 12, [583, 176, 40])]),
    (Task::Acos, "laptop", [(2934, 4172, 114, [2583, 1362, 227]), (326, 440, 71, [279, 137, 24]), (816, 1161, 81, [716, 380, 65])]),
    (Task::Acos, "rest", [(1530, 2484, 12, [1656, 733, 95]), (171, 261, 13, [180, 69, 12]), (583, 916, 12, [667, 205, 44])]),
    (Task::Tasd, "rest15", [(1120, 1654, 13, [1198, 403, 53]), (10, 13, 6, [6, 7, 0]), (582, 845, 12, [454, 346, 45])]),
    (Task::Tasd, "rest16", [(1708, 2507, 12, [1657, 749, 101]), (29, 44, 9, [23, 20, 1]), (587, 859, 12, [611, 204, 44])]),
    (Task::Aste, "rest15", [(605, 1013, 0, [783, 205, 25]), (148, 249, 0, [185, 53, 11]), (322, 485, 0, [317, 143, 25])]),
    (Task::Aste, "rest16", [(857, 1394, 0, [1015, 329, 50]), (210, 339, 0, [252, 76, 11]), (326, 514, 0, [407, 78, 29])]),
];

fn detect_adapter(dir: &Path) -> Option<FormatAdapter> {
    let exts: HashSet<String> = fs::read_dir(dir)
        .ok()?
        .filter_map(Result::ok)
        .filter_map(|e| e.path().extension().map(|x| x.to_string_lossy().into_owned()))
        .collect();
    [("jsonl", FormatAdapter::CanonicalJsonl), ("tsv", FormatAdapter::AcosTsv), ("txt", FormatAdapter::SepLine)]
        .into_iter()
        .find(|(ext, _)| exts.contains(*ext))
        .map(|(_, a)| a)
}

fn dataset_statistics() -> Outcome {
    let root = std::env::var_os("ABSA_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data"));
    let missing: Vec<String> = TABLE
        .iter()
        .map(|(task, name, _)| root.join(task.as_str()).join(name))
        .filter(|d| detect_adapter(d).is_none())
        .map(|d| d.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Outcome::Unavailable(format!(
            "{} of 8 dataset directories missing or empty (first: {})",
            missing.len(),
            missing[0]
        ));
    }

    let started = Instant::now();
    let mut mismatches = Vec::new();
    for (task, name, expected) in TABLE {
        let dir = root.join(task.as_str()).join(name);
        let adapter = detect_adapter(&dir).expect("checked above");
        let bundle = match load_dataset(&dir, adapter, &TaskSchema::for_task(task), name) {
            Ok(b) => b,
            Err(e) => {
                mismatches.push(format!("{task} {name}: {e}"));
                continue;
            }
        };
        let stats = compute_stats(&bundle);
        for (split, (sentences, tuples, categories, [pos, neg, neu])) in Split::ALL.into_iter().zip(expected) {
            let s: &SplitStats = stats.get(split);
            let got = (s.sentences, s.tuples, s.categories, [s.polarity_counts.positive, s.polarity_counts.negative, s.polarity_counts.neutral]);
            if got != (sentences, tuples, categories, [pos, neg, neu]) {
                mismatches.push(format!("{task} {name} {}: got {got:?}", split.as_str()));
            }
        }
    }
    let elapsed = started.elapsed();
    if !mismatches.is_empty() {
        return Outcome::Fail(format!("{} mismatching cells: {}", mismatches.len(), mismatches.join("; ")));
    }
    if elapsed > Duration::from_secs(5) {
        return Outcome::Fail(format!("all 96 cells match but loading took {elapsed:.1?} (limit 5 s)"));
    }
    Outcome::Pass(format!("96 of 96 cells exact, loaded in {elapsed:.1?}"))
}

// --- prompt fidelity --------------------------------------------------------

const CATEGORY_ENUMERATION: &str = "the available categories include: \"ambience general\", \"drinks prices\", \"drinks quality\", \"drinks style_options\", \"food general\", \"food prices\", \"food quality\", \"food style_options\", \"location general\", \"restaurant general\", \"restaurant miscellaneous\", \"restaurant prices\", \"service general\".";
const IMPLICIT_ASPECT: &str = "The aspect term might be \"null\" for the implicit aspect.";
const IMPLICIT_OPINION: &str = "The opinion term might be \"null\" for the implicit opinion.";
const QUAD_FORMAT: &str = "Provide your response in the format of a Python list of tuples: 'Sentiment elements: [(\"aspect term\", \"aspect category\", \"sentiment polarity\", \"opinion term\"), ...]'. Note that \", ...\" indicates that there might be more tuples in the list if applicable and must not occur in the answer. Ensure there is no additional text in the response.";
const QUAD_IGNORE: &str = "Quadruplets with objective sentiment polarity should be ignored.";
const TRIPLET_IGNORE: &str = "Triplets with objective sentiment polarity should be ignored.";
const TASD_FORMAT: &str = "Provide your response in the format of a Python list of tuples: 'Sentiment elements: [(\"aspect term\", \"aspect category\", \"sentiment polarity\"), ...]'.";
const TASD_ENSURE: &str = "Please carefully follow the instructions. Ensure that aspect terms are recognized as exact matches in the review or are \"null\" for implicit aspects. Ensure that aspect categories are from the available categories. Ensure that sentiment polarities are from the available polarities.";
const ASTE_FORMAT: &str = "Provide your response in the format of a Python list of tuples: 'Sentiment elements: [(\"aspect term\", \"opinion term\", \"sentiment polarity\"), ...]'.";
const ASTE_ENSURE: &str = "Please carefully follow the instructions. Ensure that aspect terms are recognized as exact matches in the review. Ensure that opinion terms are recognized as exact matches in the review. Ensure that sentiment polarities are from the available polarities.";
const DEMO_TARGET: &str = "Sentiment elements: [(\"service\", \"service general\", \"positive\", \"great\"), (\"dinner\", \"food quality\", \"positive\", \"great quality\")]";

fn prompt_fidelity() -> Outcome {
    let restaurant = CategoryVocabulary::restaurant();
    let render = |task: Task, demos: &[AnnotatedSentence], k: usize| {
        build_package(&TaskSchema::for_task(task), &restaurant, demos, k, "It is n't the cheapest sushi but has been worth it every time .")
            .expect("package builds")
            .render()
    };
    let demo = AnnotatedSentence::new(
        "We have gone for dinner only a few times but the same great quality and service is given .",
        vec![
            SentimentTuple::quad("service", "service general", Polarity::Positive, "great"),
            SentimentTuple::quad("dinner", "food quality", Polarity::Positive, "great quality"),
        ],
    );

    let mut failures = Vec::new();
    let mut checked = 0;
    let mut expect = |failures: &mut Vec<String>, label: &str, text: &str, needle: &str, present: bool| {
        checked += 1;
        if text.contains(needle) != present {
            failures.push(format!("{label}: {} {needle:?}", if present { "missing" } else { "unexpected" }));
        }
    };
    for task in [Task::Asqp, Task::Acos] {
        let p = render(task, std::slice::from_ref(&demo), 1);
        let label = task.as_str();
        for needle in [CATEGORY_ENUMERATION, IMPLICIT_ASPECT, IMPLICIT_OPINION, QUAD_FORMAT, QUAD_IGNORE, DEMO_TARGET] {
            expect(&mut failures, label, &p, needle, true);
        }
        expect(&mut failures, label, &p, "Input: \"\"\"We have gone for dinner only a few times but the same great quality and service is given .\"\"\"", true);
        expect(&mut failures, label, &p, "{categories}", false);
        if !p.ends_with("Input: \"\"\"It is n't the cheapest sushi but has been worth it every time .\"\"\"") {
            failures.push(format!("{label}: query is not the final line"));
        }
    }
    let tasd = render(Task::Tasd, &[], 0);
    for needle in [CATEGORY_ENUMERATION, IMPLICIT_ASPECT, TRIPLET_IGNORE, TASD_FORMAT, TASD_ENSURE] {
        expect(&mut failures, "tasd", &tasd, needle, true);
    }
    expect(&mut failures, "tasd", &tasd, "opinion term", false);
    let aste = render(Task::Aste, &[], 0);
    for needle in [TRIPLET_IGNORE, ASTE_FORMAT, ASTE_ENSURE] {
        expect(&mut failures, "aste", &aste, needle, true);
    }
    for absent in ["aspect category", "\"null\""] {
        expect(&mut failures, "aste", &aste, absent, false);
    }
    if failures.is_empty() {
        Outcome::Pass(format!("{checked} containment checks across ASQP, ACOS, TASD, ASTE"))
    } else {
        Outcome::Fail(failures.join("; "))
    }
}

// --- parser ---------------------------------------------------------------

const ALPHABET: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'A', 'Q', '0', '7', ' ', ' ', '-', '\'', '"', '\\', ',', '(', ')', '[', ']', '.', ':', '#',
    'é', '中', '😀', '\t',
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    loop {
        let len = rng.gen_range(1..12);
        let s: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
        if !s.trim().is_empty() && !s.trim().eq_ignore_ascii_case("null") {
            return s;
        }
    }
}

fn random_term(rng: &mut ChaCha8Rng, implicit_ok: bool) -> TermSpan {
    if implicit_ok && rng.gen_bool(0.2) {
        TermSpan::Implicit
    } else {
        TermSpan::Explicit(random_text(rng))
    }
}

fn random_tuple(rng: &mut ChaCha8Rng, schema: &TaskSchema) -> SentimentTuple {
    let implicit = schema.implicit_allowed;
    SentimentTuple {
        aspect: random_term(rng, implicit),
        category: schema.has_category.then(|| CategoryLabel::new(random_text(rng))),
        polarity: *Polarity::ALL.choose(rng).unwrap(),
        opinion: schema.has_opinion.then(|| random_term(rng, implicit)),
    }
}

fn random_list(rng: &mut ChaCha8Rng, schema: &TaskSchema) -> Vec<SentimentTuple> {
    let n = rng.gen_range(0..=5);
    let mut out: Vec<SentimentTuple> = Vec::with_capacity(n);
    while out.len() < n {
        let t = random_tuple(rng, schema);
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn mutate(rng: &mut ChaCha8Rng, mut bytes: Vec<u8>) -> Vec<u8> {
    for _ in 0..rng.gen_range(1..6) {
        match rng.gen_range(0..4) {
            0 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] = rng.gen();
            }
            1 => {
                let i = rng.gen_range(0..=bytes.len());
                bytes.insert(i, *b"\"'(),[]\\ n".choose(rng).unwrap());
            }
            2 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                bytes.remove(i);
            }
            _ => {
                let i = rng.gen_range(0..=bytes.len());
                bytes.truncate(i);
            }
        }
    }
    bytes
}

fn parser_round_trip_and_fuzz() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut round_trips = 0;
    let mut corpus = Vec::new();
    for task in Task::ALL {
        let schema = TaskSchema::for_task(task);
        for i in 0..10_000 {
            let list = random_list(&mut rng, &schema);
            let text = match serialize_tuples(&list, &schema) {
                Ok(t) => t,
                Err(e) => return Outcome::Fail(format!("{task}: serializing {list:?}: {e}")),
            };
            for mode in [ParseMode::Strict, ParseMode::Tolerant] {
                match parse_response(&text, &schema, mode) {
                    Ok(out) if out.tuples == list && out.diagnostics.is_empty() => {}
                    other => return Outcome::Fail(format!("{task} {mode:?}: {text:?} parsed as {other:?}")),
                }
            }
            round_trips += 1;
            if i % 40 == 0 {
                corpus.push((schema.clone(), text.into_bytes()));
            }
        }
    }

    let mut fuzzed = 0;
    for i in 0..100_000 {
        let (schema, bytes) = if i % 2 == 0 {
            let len = rng.gen_range(0..256);
            let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            (TaskSchema::for_task(*Task::ALL.choose(&mut rng).unwrap()), bytes)
        } else {
            let (schema, seed) = corpus.choose(&mut rng).unwrap().clone();
            (schema, mutate(&mut rng, seed))
        };
        if catch_unwind(|| parse_response_bytes(&bytes, &schema)).is_err() {
            return Outcome::Fail(format!("tolerant parser panicked on {bytes:?}"));
        }
        fuzzed += 1;
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(60) {
        return Outcome::Fail(format!("took {elapsed:.1?} (limit 60 s)"));
    }
    Outcome::Pass(format!(
        "{round_trips} lists round-trip exactly in both modes; {fuzzed} random byte strings parsed without a crash"
    ))
}

// --- scorer -----------------------------------------------------------------

/// Reference normalization: trim, lowercase, collapse runs of whitespace.
fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn same(a: &SentimentTuple, b: &SentimentTuple, strict: bool) -> bool {
    let text = |x: &str, y: &str| if strict { x == y } else { normalize(x) == normalize(y) };
    let term = |x: &TermSpan, y: &TermSpan| match (x, y) {
        (TermSpan::Implicit, TermSpan::Implicit) => true,
        (TermSpan::Explicit(x), TermSpan::Explicit(y)) => text(x, y),
        _ => false,
    };
    term(&a.aspect, &b.aspect)
        && a.polarity == b.polarity
        && match (&a.category, &b.category) {
            (Some(x), Some(y)) => text(x.as_str(), y.as_str()),
            (None, None) => true,
            _ => false,
        }
        && match (&a.opinion, &b.opinion) {
            (Some(x), Some(y)) => term(x, y),
            (None, None) => true,
            _ => false,
        }
}

/// Counts by exhaustive pairwise comparison.
fn brute_force(pred: &[SentimentTuple], gold: &[SentimentTuple], strict: bool, multiset: bool) -> Counts {
    let distinct = |ts: &[SentimentTuple]| {
        let mut out: Vec<SentimentTuple> = Vec::new();
        for t in ts {
            if multiset || !out.iter().any(|u| same(u, t, strict)) {
                out.push(t.clone());
            }
        }
        out
    };
    let pred = distinct(pred);
    let gold = distinct(gold);
    let mut used = vec![false; gold.len()];
    let mut tp = 0;
    for p in &pred {
        if let Some(j) = (0..gold.len()).find(|&j| !used[j] && same(p, &gold[j], strict)) {
            used[j] = true;
            tp += 1;
        }
    }
    Counts::new(tp, pred.len() - tp, gold.len() - tp)
}

fn variant(rng: &mut ChaCha8Rng, s: &str) -> String {
    match rng.gen_range(0..4) {
        0 => s.to_uppercase(),
        1 => format!(" {s} "),
        2 => s.replace(' ', "  "),
        _ => s.to_string(),
    }
}

fn scorer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let aspects = ["pizza", "wine list", "staff"];
    let opinions = ["great", "too mild"];
    let categories = ["food quality", "service general"];
    let draw = |rng: &mut ChaCha8Rng, schema: &TaskSchema| SentimentTuple {
        aspect: if schema.implicit_allowed && rng.gen_bool(0.15) {
            TermSpan::Implicit
        } else {
            TermSpan::Explicit({ let a = *aspects.choose(rng).unwrap(); variant(rng, a) })
        },
        category: schema
            .has_category
            .then(|| CategoryLabel::new({ let c = *categories.choose(rng).unwrap(); variant(rng, c) })),
        polarity: *Polarity::ALL[..2].choose(rng).unwrap(),
        opinion: schema
            .has_opinion
            .then(|| TermSpan::Explicit({ let o = *opinions.choose(rng).unwrap(); variant(rng, o) })),
    };
    let policies = [(CanonicalizationPolicy::default(), false), (CanonicalizationPolicy::strict(), true)];
    let mut compared = 0;
    for i in 0..1_000 {
        let schema = TaskSchema::for_task(Task::ALL[i % 4]);
        let pred: Vec<_> = (0..rng.gen_range(0..=6)).map(|_| draw(&mut rng, &schema)).collect();
        let gold: Vec<_> = (0..rng.gen_range(0..=6)).map(|_| draw(&mut rng, &schema)).collect();
        for (policy, strict) in &policies {
            for (matching, multiset) in [(Matching::Set, false), (Matching::Multiset, true)] {
                let got = score_sentence_with(&pred, &gold, policy, matching);
                let want = brute_force(&pred, &gold, *strict, multiset);
                if got != want {
                    return Outcome::Fail(format!("instance {i} ({matching:?}, strict={strict}): got {got:?}, brute force {want:?}"));
                }
                compared += 1;
            }
        }
    }

    let checks: [(Counts, f64, f64, f64); 6] = [
        (Counts::new(0, 0, 0), 0.0, 0.0, 0.0),
        (Counts::new(0, 4, 0), 0.0, 0.0, 0.0),
        (Counts::new(0, 0, 4), 0.0, 0.0, 0.0),
        (Counts::new(0, 2, 3), 0.0, 0.0, 0.0),
        (Counts::new(3, 1, 2), 0.75, 0.6, 2.0 * 0.75 * 0.6 / 1.35),
        (Counts::new(5, 0, 0), 1.0, 1.0, 1.0),
    ];
    for (counts, p, r, f1) in checks {
        let m = RunMetrics::from_counts(counts);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        if !(close(m.precision, p) && close(m.recall, r) && close(m.f1, f1)) || !m.f1.is_finite() {
            return Outcome::Fail(format!("{counts:?} gave {m:?}"));
        }
    }
    Outcome::Pass(format!("{compared} comparisons equal the brute-force counts; 6 formula cases incl. zero denominators"))
}

// --- end to end ---------------------------------------------------------------

fn end_to_end_oracles() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut lines = Vec::new();
    for (i, (task, name, _)) in KNOWN_COMBINATIONS.iter().enumerate() {
        let started = Instant::now();
        let base = tmp.path().join(format!("{}-{name}", task.as_str()));
        let data = common::write_dataset(&base.join("data"), *task, 100 + i as u64, [40, 10, 60]);
        let bundle = load_dataset(&data, FormatAdapter::CanonicalJsonl, &TaskSchema::for_task(*task), name).expect("loads");
        let server = MockServer::start(EchoGold::new(&bundle, Split::Test).responder(), None).expect("server");

        let mut cfg = RunConfig::new(*name, &data, FormatAdapter::CanonicalJsonl, *task);
        cfg.shots = ShotSetting::Few(10);
        cfg.endpoint.base_url = server.url().to_string();
        cfg.output.dir = base.join("echo");
        cfg.output.cache_dir = Some(base.join("cache"));
        let echo = match run_eval(&cfg) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(format!("{task} {name}: {e}")),
        };
        drop(server);
        if percent(echo.aggregate.mean_f1) != "100.00" || echo.runs.len() != 5 {
            return Outcome::Fail(format!("{task} {name}: echo-gold F1 {}", percent(echo.aggregate.mean_f1)));
        }

        let mut replay = cfg.clone();
        replay.output.dir = base.join("replay");
        replay.output.offline = true;
        replay.endpoint.base_url = "http://127.0.0.1:9/v1".into();
        if let Err(e) = run_eval(&replay) {
            return Outcome::Fail(format!("{task} {name}: offline replay: {e}"));
        }
        let a = fs::read(cfg.output.dir.join(REPORT_JSON)).expect("report");
        let b = fs::read(replay.output.dir.join(REPORT_JSON)).expect("report");
        if a != b {
            return Outcome::Fail(format!("{task} {name}: replayed report differs"));
        }

        let mut empty_cfg = cfg.clone();
        empty_cfg.output.dir = base.join("empty");
        empty_cfg.output.cache_dir = Some(base.join("cache-empty"));
        let empty = match run_eval_with(&empty_cfg, Arc::new(MockTransport::new(empty_list_responder()))) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(format!("{task} {name}: {e}")),
        };
        let gold = empty.gold_tuples;
        if percent(empty.aggregate.mean_f1) != "0.00" || empty.runs.iter().any(|r| r.metrics.counts != Counts::new(0, 0, gold)) {
            return Outcome::Fail(format!("{task} {name}: empty mock gave {:?}", empty.runs[0].metrics));
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(120) {
            return Outcome::Fail(format!("{task} {name}: took {elapsed:.1?} (limit 2 min)"));
        }
        lines.push(format!("{task} {name}"));
    }
    Outcome::Pass(format!(
        "echo-gold 100.00, empty 0.00 with fn = gold, byte-identical offline replay on {} synthetic datasets",
        lines.len()
    ))
}

// --- error analysis -----------------------------------------------------------

fn error_analysis_structure() -> Outcome {
    let axes = [
        (Task::Asqp, vec![Element::Aspect, Element::Category, Element::Polarity, Element::Opinion]),
        (Task::Acos, vec![Element::Aspect, Element::Category, Element::Polarity, Element::Opinion]),
        (Task::Tasd, vec![Element::Aspect, Element::Category, Element::Polarity]),
        (Task::Aste, vec![Element::Aspect, Element::Polarity, Element::Opinion]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (task, expected) in axes {
        let schema = TaskSchema::for_task(task);
        let s = common::sentence(task, &mut rng);
        let records = align_errors(0, &[], &s.gold, &schema);
        let histogram = error_histogram(&records, &schema);
        if histogram.elements() != expected {
            return Outcome::Fail(format!("{task}: axes {:?}", histogram.elements()));
        }
    }

    let schema = TaskSchema::for_task(Task::Asqp);
    let pred = SentimentTuple::quad("food", "food quality", Polarity::Neutral, "mild");
    let gold = SentimentTuple::quad("food", "food quality", Polarity::Neutral, "too mild");
    let records = align_errors(0, &[pred], &[gold], &schema);
    match records.as_slice() {
        [r] if r.is_paired() && r.differing == [Element::Opinion] && r.near_miss => {}
        other => return Outcome::Fail(format!("mild/too mild classified as {other:?}")),
    }
    Outcome::Pass(format!(
        "axes match per task; mild vs too mild is an opinion near-miss ({ALIGNMENT_METHOD})"
    ))
}

// --- results table --------------------------------------------------------------

fn synthetic_report(method: &str, task: Task, dataset: &str, f1: f64, policy: CanonicalizationPolicy) -> EvalReport {
    let mut cfg = RunConfig::new(dataset, ".", FormatAdapter::SepLine, task);
    cfg.method = Some(method.into());
    cfg.policy = policy;
    cfg.runs = 1;
    let metrics = RunMetrics {
        counts: Counts::default(),
        precision: f1,
        recall: f1,
        f1,
    };
    let aggregate: AggregateMetrics = aggregate(&[metrics]).expect("one run");
    let schema = TaskSchema::for_task(task);
    EvalReport {
        tool: "absa-eval".into(),
        tool_version: "test".into(),
        config: cfg.echo(),
        dataset_manifest: String::new(),
        split: Split::Test,
        sentences: 0,
        gold_tuples: 0,
        runs: vec![RunEntry {
            run: 1,
            seed: 0,
            metrics,
            responses_with_diagnostics: 0,
        }],
        aggregate,
        diagnostics: DiagnosticsSummary::default(),
        analysis: AnalysisSummary {
            run: 1,
            alignment_method: ALIGNMENT_METHOD.into(),
            errors: 0,
            paired: 0,
            unmatched_predictions: 0,
            missed_gold: 0,
            near_misses: 0,
            histogram: error_histogram(&[], &schema),
            polarity_confusion: Default::default(),
            review_sample: Vec::new(),
        },
    }
}

fn results_table_average() -> Outcome {
    // Reference per-dataset F1 row, in column order.
    let row = [52.29, 60.82, 44.09, 65.80, 70.49, 78.82, 69.91, 74.23];
    let policy = CanonicalizationPolicy::default();
    let mut reports: Vec<EvalReport> = KNOWN_COMBINATIONS
        .iter()
        .zip(row)
        .map(|((task, name, _), f1)| synthetic_report("Orca 2 13B", *task, name, f1 / 100.0, policy))
        .collect();
    reports.reverse();
    let table = match report_table(&reports) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let avg = percent(table.rows[0].avg);
    let rendered = table.render();
    let cells_ok = table.rows[0]
        .cells
        .iter()
        .zip(row)
        .all(|(c, want)| c.map(percent) == Some(format!("{want:.2}")));
    if avg != "64.56" || !cells_ok || !table.rows[0].complete || !rendered.contains("64.56") {
        return Outcome::Fail(format!("AVG {avg}\n{rendered}"));
    }

    let single = report_table(&reports[..1]).expect("one report");
    if single.columns.len() != 1 || percent(single.rows[0].avg) != percent(reports[0].aggregate.mean_f1) {
        return Outcome::Fail(format!("single report table:\n{}", single.render()));
    }
    let mut mixed = reports.clone();
    mixed[3] = synthetic_report("Orca 2 13B", Task::Acos, "laptop", 0.4409, CanonicalizationPolicy::strict());
    if !matches!(report_table(&mixed), Err(TableError::MixedPolicy(..))) {
        return Outcome::Fail("mixed policies were not rejected".into());
    }
    Outcome::Pass("eight-dataset row averages to 64.56; single report and mixed-policy cases hold".into())
}
