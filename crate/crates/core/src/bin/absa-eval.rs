//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 endpoint
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use absa_eval::client::mock::{empty_list_responder, EchoGold, MockServer};
use absa_eval::client::ENV_API_KEY;
use absa_eval::ingest::{compute_stats, dataset_manifest, load_dataset_with, FormatAdapter, LoadOptions, VocabularySource};
use absa_eval::orchestrator::{
    analyze_run, report_table, rescore, run_eval, EvalReport, RescoreOptions, RunConfig, RunError, ShotSetting,
};
use absa_eval::prompt::{build_finetune_pairs, build_package};
use absa_eval::scorer::{percent, Matching};
use absa_eval::{CanonicalizationPolicy, DatasetBundle, Polarity, Split, Task, TaskSchema};

#[derive(Parser)]
#[command(name = "absa-eval", version, about = "Evaluate LLMs on compound aspect-based sentiment tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-split sentence, tuple, category and polarity counts.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        json: bool,
    },
    /// Print the rendered prompt for one test sentence.
    Prompt {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "0")]
        shots: ShotSetting,
        /// Index into the test split.
        #[arg(long, default_value_t = 0, conflicts_with = "text")]
        index: usize,
        /// Use this sentence instead of a test sentence.
        #[arg(long)]
        text: Option<String>,
    },
    /// Run an experiment end to end.
    Run(Box<RunArgs>),
    /// Re-parse and re-score the responses stored in an output directory.
    Score {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_policy)]
        policy: Option<CanonicalizationPolicy>,
        #[arg(long, value_enum)]
        matching: Option<MatchingArg>,
    },
    /// Error analysis of one stored run.
    Analyze {
        #[arg(long)]
        out: PathBuf,
        /// 1-based run number; defaults to the run the report analyzed.
        #[arg(long)]
        run: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Tabulate mean F1 from several reports.
    Report {
        /// `report.json` files or output directories.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write prompt/completion training pairs as JSON lines.
    ExportFinetune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a mock chat-completion endpoint for a dataset.
    MockServe {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = MockMode::EchoGold)]
        mode: MockMode,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "127.0.0.1:8000")]
        addr: String,
        /// Require this bearer token.
        #[arg(long, env = ENV_API_KEY)]
        token: Option<String>,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset directory holding the train/dev/test files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    task: Task,
    #[arg(long, default_value = "canonical-jsonl")]
    adapter: FormatAdapter,
    /// auto, train, restaurant or a category file.
    #[arg(long, default_value = "auto")]
    vocabulary: VocabularySource,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    dataset_name: Option<String>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    adapter: Option<FormatAdapter>,
    #[arg(long)]
    vocabulary: Option<String>,
    /// Allow a task/dataset pair outside the eight known ones.
    #[arg(long)]
    user_supplied: bool,
    #[arg(long)]
    shots: Option<ShotSetting>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<CanonicalizationPolicy>,
    #[arg(long, value_enum)]
    matching: Option<MatchingArg>,
    #[arg(long)]
    review_size: Option<usize>,
    #[arg(long)]
    review_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Answer only from the cache.
    #[arg(long)]
    offline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingArg {
    Set,
    Multiset,
}

impl From<MatchingArg> for Matching {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::Set => Matching::Set,
            MatchingArg::Multiset => Matching::Multiset,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MockMode {
    EchoGold,
    Empty,
}

fn parse_policy(s: &str) -> Result<CanonicalizationPolicy, String> {
    match s {
        "default" => Ok(CanonicalizationPolicy::default()),
        "strict" => Ok(CanonicalizationPolicy::strict()),
        "trim" => Ok(CanonicalizationPolicy::new(false, false)),
        "trim+lowercase" => Ok(CanonicalizationPolicy::new(true, false)),
        "trim+collapse-ws" => Ok(CanonicalizationPolicy::new(false, true)),
        other => Err(format!(
            "unknown policy {other:?} (expected default, strict, trim, trim+lowercase or trim+collapse-ws)"
        )),
    }
}

/// An error paired with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }

    fn data(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(data: &DataArgs) -> Result<DatasetBundle, Failure> {
    let name = data
        .data
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let options = LoadOptions {
        vocabulary: data.vocabulary.clone(),
    };
    load_dataset_with(&data.data, data.adapter, &TaskSchema::for_task(data.task), &name, &options).map_err(Failure::data)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Stats { data, json } => {
            let bundle = load(&data)?;
            let stats = compute_stats(&bundle);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats).expect("serializable"));
                return Ok(());
            }
            println!("{} {} ({} categories in vocabulary)", bundle.schema.task, bundle.name, bundle.categories.len());
            println!("{:<6} {:>10} {:>8} {:>11}  POS/NEG/NEU", "split", "sentences", "tuples", "categories");
            for split in Split::ALL {
                let s = stats.get(split);
                println!(
                    "{:<6} {:>10} {:>8} {:>11}  {}",
                    split.as_str(),
                    s.sentences,
                    s.tuples,
                    s.categories,
                    s.polarity_counts
                );
            }
            println!("manifest {}", dataset_manifest(&bundle));
        }
        Command::Prompt {
            data,
            shots,
            index,
            text,
        } => {
            let bundle = load(&data)?;
            let query = match text {
                Some(t) => t,
                None => bundle
                    .test
                    .get(index)
                    .map(|s| s.text.clone())
                    .ok_or_else(|| Failure::config(format!("test split has {} sentences", bundle.test.len())))?,
            };
            let package = build_package(&bundle.schema, &bundle.categories, &bundle.train, shots.demonstrations(), &query)
                .map_err(RunError::Prompt)?;
            println!("{}", package.render());
        }
        Command::Run(args) => {
            let cfg = build_run_config(*args)?;
            let report = run_eval(&cfg)?;
            println!(
                "{} {} {}: F1 {} (stddev {}) over {} run(s); report in {}",
                report.config.method,
                report.config.task,
                report.config.dataset,
                percent(report.aggregate.mean_f1),
                percent(report.aggregate.stddev_f1),
                report.aggregate.runs,
                cfg.output.dir.display()
            );
        }
        Command::Score { out, policy, matching } => {
            let report = rescore(
                &out,
                RescoreOptions {
                    policy,
                    matching: matching.map(Into::into),
                },
            )?;
            print!("{}", absa_eval::orchestrator::render_run_report(&report));
        }
        Command::Analyze { out, run, json } => {
            let analysis = analyze_run(&out, run)?;
            let s = &analysis.summary;
            if json {
                println!("{}", serde_json::to_string_pretty(s).expect("serializable"));
                return Ok(());
            }
            println!(
                "run {}: {} errors ({} paired, {} unmatched predictions, {} missed gold, {} near misses)",
                s.run, s.errors, s.paired, s.unmatched_predictions, s.missed_gold, s.near_misses
            );
            for (element, count) in &s.histogram.0 {
                println!("  {:<10} {count:>6}", element.to_string());
            }
            println!("polarity confusion (rows gold, columns predicted)");
            println!("  {:<10} {:>9} {:>9} {:>9}", "", "positive", "negative", "neutral");
            for g in Polarity::ALL {
                let row: Vec<String> = Polarity::ALL
                    .iter()
                    .map(|p| format!("{:>9}", s.polarity_confusion.get(g, *p)))
                    .collect();
                println!("  {:<10} {}", g.as_str(), row.join(" "));
            }
        }
        Command::Report { reports, json } => {
            let loaded = reports
                .iter()
                .map(|p| EvalReport::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let table = report_table(&loaded).map_err(Failure::config)?;
            if let Some(path) = json {
                let body = serde_json::to_vec_pretty(&table).expect("serializable");
                write_out(&path, &body)?;
            }
            print!("{table}");
        }
        Command::ExportFinetune { data, split, out } => {
            let bundle = load(&data)?;
            let pairs = build_finetune_pairs(&bundle, split).map_err(Failure::data)?;
            let mut body = Vec::new();
            for p in &pairs {
                serde_json::to_writer(&mut body, p).expect("serializable");
                body.push(b'\n');
            }
            write_out(&out, &body)?;
            eprintln!("wrote {} pairs to {}", pairs.len(), out.display());
        }
        Command::MockServe {
            data,
            mode,
            split,
            addr,
            token,
        } => {
            let bundle = load(&data)?;
            let server = match mode {
                MockMode::EchoGold => MockServer::bind(&addr, EchoGold::new(&bundle, split).responder(), token),
                MockMode::Empty => MockServer::bind(&addr, empty_list_responder(), token),
            }
            .map_err(|e| Failure {
                code: 3,
                message: format!("cannot bind {addr}: {e}"),
            })?;
            eprintln!("serving on {}", server.url());
            server.wait();
        }
    }
    Ok(())
}

fn build_run_config(a: RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path).map_err(Failure::config)?,
        None => {
            let data = a
                .data
                .clone()
                .ok_or_else(|| Failure::config("--data is required without --config"))?;
            let task = a.task.ok_or_else(|| Failure::config("--task is required without --config"))?;
            let name = data
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            RunConfig::new(name, data, a.adapter.unwrap_or(FormatAdapter::CanonicalJsonl), task)
        }
    };
    cfg.endpoint.apply_env();

    if let Some(v) = a.data {
        cfg.dataset.path = v;
    }
    if let Some(v) = a.dataset_name {
        cfg.dataset.name = v;
    }
    if let Some(v) = a.task {
        cfg.task = v;
    }
    if let Some(v) = a.adapter {
        cfg.dataset.adapter = v;
    }
    if let Some(v) = a.vocabulary {
        cfg.dataset.vocabulary = Some(v);
    }
    cfg.dataset.user_supplied |= a.user_supplied;
    if let Some(v) = a.shots {
        cfg.shots = v;
    }
    if let Some(v) = a.runs {
        cfg.runs = v;
    }
    if let Some(v) = a.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = a.method {
        cfg.method = Some(v);
    }
    if let Some(v) = a.endpoint {
        cfg.endpoint.base_url = v;
    }
    if let Some(v) = a.model {
        cfg.endpoint.model = v;
    }
    if let Some(v) = a.max_tokens {
        cfg.endpoint.max_tokens = v;
    }
    if let Some(v) = a.max_in_flight {
        cfg.endpoint.max_in_flight = v;
    }
    if let Some(v) = a.timeout_secs {
        cfg.endpoint.timeout_secs = v;
    }
    if let Some(v) = a.max_retries {
        cfg.endpoint.max_retries = v;
    }
    if let Some(v) = a.policy {
        cfg.policy = v;
    }
    if let Some(v) = a.matching {
        cfg.matching = v.into();
    }
    if let Some(v) = a.review_size {
        cfg.review.size = v;
    }
    if let Some(v) = a.review_seed {
        cfg.review.seed = v;
    }
    if let Some(v) = a.out {
        cfg.output.dir = v;
    }
    if let Some(v) = a.cache {
        cfg.output.cache_dir = Some(v);
    }
    cfg.output.offline |= a.offline;
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}
