//! Command implementations behind the `revhist` binary.
//!
//! Each stage subcommand builds the same stage description a pipeline file
//! would and runs it through the core pipeline runner, so a stage run by
//! hand and one run from a file produce the same outputs and report.
//! Reports go to stdout as one JSON line each, and are also appended to
//! `--report PATH` when given.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use revhist_core::dump::Compression;
use revhist_core::extract::{extract_partition, OperatorChain};
use revhist_core::index::{CountMode, Field, IndexReader, QueryKey, TermSelector};
use revhist_core::partition::{OutputFormat, PartitionMode};
use revhist_core::pipeline::{run_pipeline, run_stage, JobReport, PipelineConfig, StageConfig};
use revhist_core::time::{parse_date, DateRange, Granularity};
use revhist_core::ErrorClass;
use revhist_service::{ServiceConfig, INDEX_ENV};

#[derive(Debug, Parser)]
#[command(name = "revhist", version, about = "Revision-history analytics over MediaWiki dumps")]
pub struct Cli {
    /// Upper bound on worker threads in every stage (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Append job reports to this json-lines file.
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Log filter, e.g. `info` or `revhist_core=debug`. Defaults to RUST_LOG, then `warn`.
    #[arg(long, global = true, value_name = "FILTER")]
    pub log: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic dump.
    GenFixture(GenFixtureArgs),
    /// Split a dump into independent partition files.
    Partition(PartitionArgs),
    /// Run an operator chain over partition files.
    Extract(ExtractArgs),
    /// Add emitted anchors/fulltext records to a temporal index.
    Index(IndexArgs),
    /// Answer one query against an index and print it as JSON.
    Query(QueryArgs),
    /// Serve an index over HTTP.
    Serve(ServeArgs),
    /// Run every stage of a pipeline file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct GenFixtureArgs {
    #[arg(long, default_value_t = 100)]
    pub pages: usize,
    #[arg(long, default_value_t = 20)]
    pub revisions_per_page: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_parser = date_arg)]
    pub start_date: Option<NaiveDate>,
    /// Revisions are spread over this many days from the start date.
    #[arg(long)]
    pub span_days: Option<u32>,
    #[arg(long)]
    pub words_per_revision: Option<usize>,
    /// none, gzip, bzip2 or bzip2-multistream; guessed from `--out` if omitted.
    #[arg(long)]
    pub compression: Option<Compression>,
    /// Generate a named event scenario (`olympics-2012`) instead.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// entity (all revisions of a page together) or document.
    #[arg(long, default_value = "entity")]
    pub mode: PartitionMode,
    #[arg(long, default_value_t = 8)]
    pub partitions: usize,
    /// xml or jsonl.
    #[arg(long, default_value = "jsonl")]
    pub format: OutputFormat,
    /// Keep revisions at or after this date (or timestamp).
    #[arg(long)]
    pub from: Option<String>,
    /// Keep revisions before this date (or timestamp).
    #[arg(long)]
    pub to: Option<String>,
    /// Comma-separated namespace ids.
    #[arg(long, value_delimiter = ',')]
    pub namespaces: Option<Vec<i32>>,
    /// Main namespace (0) only; combines with the other filters.
    #[arg(long)]
    pub articles_only: bool,
    /// File of `<key>TAB<id>` lines; only these entities are kept.
    #[arg(long)]
    pub entity_list: Option<PathBuf>,
    /// Key normalization for the entity list: title-exact, title-case-fold or url-decode (default).
    #[arg(long)]
    pub normalization: Option<String>,
    /// Name of a builtin predicate.
    #[arg(long)]
    pub custom: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Sampling seed recorded in the report.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// A partition file, or a partitioner output directory.
    #[arg(long)]
    pub partition: PathBuf,
    /// Operator chain, e.g. `filter:from=2012-05-01,to=2012-06-01;project:fulltext`.
    #[arg(long, default_value = "project:anchors")]
    pub ops: String,
    /// A `.jsonl` file for a single partition, otherwise a directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of `sample:` operators.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// An emitted-record file or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    /// Index directory; created if missing, extended otherwise.
    #[arg(long)]
    pub index: PathBuf,
    /// Skip a record whose postings equal the previous revision's.
    #[arg(long)]
    pub dedup_consecutive: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("op").required(true).args(["timeline", "top_terms", "all_terms", "cooccur", "entity_search", "stats"])))]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Timeline of a term (or an entity with `--by entity`).
    #[arg(long, value_name = "KEY")]
    pub timeline: Option<String>,
    /// Top terms of an entity (or a term/prefix with `--by`).
    #[arg(long, value_name = "KEY")]
    pub top_terms: Option<String>,
    /// Top terms over everything.
    #[arg(long)]
    pub all_terms: bool,
    /// Side-by-side timelines of two keys and their overlap.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub cooccur: Option<Vec<String>>,
    #[arg(long, value_name = "PREFIX")]
    pub entity_search: Option<String>,
    /// Index statistics.
    #[arg(long)]
    pub stats: bool,
    /// term, entity or prefix; the default depends on the query.
    #[arg(long)]
    pub by: Option<String>,
    /// anchor or fulltext; entity search spans both unless given.
    #[arg(long)]
    pub field: Option<Field>,
    #[arg(long, default_value = "week")]
    pub granularity: Granularity,
    /// Inclusive start; defaults to the first indexed day.
    #[arg(long, value_parser = date_arg)]
    pub from: Option<NaiveDate>,
    /// Exclusive end; defaults to the day after the last indexed day.
    #[arg(long, value_parser = date_arg)]
    pub to: Option<NaiveDate>,
    /// count or frequency.
    #[arg(long, default_value = "count")]
    pub mode: CountMode,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
    /// Pretty-print the JSON.
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides the config file and REVHIST_INDEX.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// host:port; overrides the config file.
    #[arg(long)]
    pub bind: Option<String>,
    /// TOML service configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// TOML pipeline description.
    pub config: PathBuf,
    /// Delete existing stage outputs instead of refusing to run.
    #[arg(long)]
    pub force: bool,
}

fn date_arg(s: &str) -> Result<NaiveDate, String> {
    parse_date(s).map_err(|e| e.to_string())
}

/// A failure with its exit-code class.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    fn new(class: ErrorClass, message: impl std::fmt::Display) -> Self {
        CliError { class, message: message.to_string() }
    }

    fn usage(message: impl std::fmt::Display) -> Self {
        CliError::new(ErrorClass::Usage, message)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ErrorClass::Usage.exit_code() } else { 0 };
        }
    };
    init_logging(cli.log.as_deref());
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("revhist: {e}");
            e.class.exit_code()
        }
    }
}

fn init_logging(filter: Option<&str>) {
    use tracing_subscriber::EnvFilter;
    let filter = match filter {
        Some(f) => EnvFilter::new(f),
        None => EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
    };
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let reporter = Reporter { path: cli.report.clone() };
    let workers = cli.workers;
    match cli.command {
        Command::GenFixture(a) => {
            let compression = a.compression.unwrap_or_else(|| Compression::from_path(&a.out));
            let stage = StageConfig::GenFixture {
                pages: a.pages,
                revisions_per_page: a.revisions_per_page,
                start_date: a.start_date,
                span_days: a.span_days,
                words_per_revision: a.words_per_revision,
                compression,
                scenario: a.scenario,
                seed: Some(a.seed),
                out: Some(a.out.clone()),
            };
            run_one(&stage, None, &a.out, a.seed, workers, &reporter)
        }
        Command::Partition(a) => {
            let stage = StageConfig::Partition {
                input: Some(a.input.clone()),
                mode: a.mode,
                partitions: a.partitions,
                format: a.format,
                from: a.from,
                to: a.to,
                namespaces: a.namespaces,
                articles_only: a.articles_only,
                entity_list: a.entity_list,
                normalization: a.normalization,
                custom: a.custom,
                out: Some(a.out.clone()),
            };
            if a.partitions == 0 {
                return Err(CliError::usage("--partitions must be at least 1"));
            }
            run_one(&stage, Some(&a.input), &a.out, a.seed, workers, &reporter)
        }
        Command::Extract(a) => extract(a, workers, &reporter),
        Command::Index(a) => {
            let stage = StageConfig::Index { input: Some(a.input.clone()), dedup_consecutive: a.dedup_consecutive, out: Some(a.index.clone()) };
            run_one(&stage, Some(&a.input), &a.index, 0, workers, &reporter)
        }
        Command::Query(a) => query(a),
        Command::Serve(a) => serve(a),
        Command::Pipeline(a) => {
            let mut cfg = PipelineConfig::load(&a.config).map_err(|e| CliError::new(e.class(), e))?;
            if workers > 0 {
                cfg.workers = workers;
            }
            let mut sink_err = None;
            let result = run_pipeline(&cfg, a.force, |r| {
                if let Err(e) = reporter.emit(r) {
                    sink_err.get_or_insert(e);
                }
            });
            result.map_err(|e| CliError::new(e.class(), e))?;
            sink_err.map_or(Ok(()), Err)
        }
    }
}

/// Writes one line to stdout. A reader that went away (`| head`) is not an
/// error; the work is already done.
fn stdout_line(line: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::new(ErrorClass::Io, format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

struct Reporter {
    path: Option<PathBuf>,
}

impl Reporter {
    fn emit(&self, report: &JobReport) -> Result<(), CliError> {
        let line = serde_json::to_string(report).expect("reports serialize");
        stdout_line(&line)?;
        if let Some(path) = &self.path {
            let io = |e: std::io::Error| CliError::new(ErrorClass::Io, format!("{}: {e}", path.display()));
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
            writeln!(f, "{line}").map_err(io)?;
        }
        Ok(())
    }
}

fn run_one(stage: &StageConfig, input: Option<&Path>, out: &Path, seed: u64, workers: usize, reporter: &Reporter) -> Result<(), CliError> {
    let started = Instant::now();
    let mut report = run_stage(stage, input, out, seed, workers).map_err(|e| CliError::new(e.class(), e))?;
    report.wall_time_ms = started.elapsed().as_millis() as u64;
    reporter.emit(&report)
}

fn extract(a: ExtractArgs, workers: usize, reporter: &Reporter) -> Result<(), CliError> {
    let single = a.partition.is_file() && a.out.extension().is_some_and(|e| e == "jsonl");
    if !single {
        let stage = StageConfig::Extract { input: Some(a.partition.clone()), ops: a.ops, out: Some(a.out.clone()) };
        return run_one(&stage, Some(&a.partition), &a.out, a.seed, workers, reporter);
    }
    let started = Instant::now();
    let chain = OperatorChain::parse(&a.ops, a.seed).map_err(CliError::usage)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::new(ErrorClass::Io, format!("{}: {e}", parent.display())))?;
    }
    let s = extract_partition(&a.partition, &chain, &a.out).map_err(|e| CliError::new(e.class(), e))?;
    let report = JobReport {
        stage: revhist_core::Stage::Extract,
        seed: a.seed,
        inputs: vec![a.partition],
        outputs: vec![a.out],
        records_in: s.records_read,
        records_out: s.emitted,
        dropped_by_filter: s.dropped_by_filter,
        wall_time_ms: started.elapsed().as_millis() as u64,
        counters: [
            ("dropped_by_sample".to_string(), s.dropped_by_sample),
            ("payloads_built".to_string(), s.payloads()),
            ("parent_missing".to_string(), s.parent_missing),
        ]
        .into(),
        digest: None,
    };
    reporter.emit(&report)
}

fn query(a: QueryArgs) -> Result<(), CliError> {
    let reader = IndexReader::open(&a.index).map_err(|e| CliError::new(e.class(), e))?;
    let field = a.field.unwrap_or(Field::Anchor);
    let range = || -> Result<DateRange, CliError> {
        let span = reader.stats().date_span();
        let start = a.from.or(span.map(|s| s.start)).ok_or_else(|| CliError::usage("--from is required on an empty index"))?;
        let end = a.to.or(span.map(|s| s.end)).ok_or_else(|| CliError::usage("--to is required on an empty index"))?;
        Ok(DateRange::new(start, end))
    };
    let key = |q: &str, default_entity: bool| -> Result<QueryKey, CliError> {
        match a.by.as_deref().unwrap_or(if default_entity { "entity" } else { "term" }) {
            "term" => Ok(QueryKey::term(q)),
            "entity" => Ok(QueryKey::entity(q)),
            other => Err(CliError::usage(format!("--by {other:?}: expected term or entity"))),
        }
    };
    let qerr = |e: revhist_core::QueryError| CliError::usage(e);
    let print = |v: &dyn erased::Json| -> Result<(), CliError> {
        stdout_line(&v.encode(a.pretty))
    };
    if let Some(q) = &a.timeline {
        print(&reader.timeline(&key(q, false)?, field, a.granularity, range()?, a.mode).map_err(qerr)?)
    } else if a.top_terms.is_some() || a.all_terms {
        let q = a.top_terms.as_deref().unwrap_or("");
        let selector = match (a.all_terms, a.by.as_deref()) {
            (true, _) => TermSelector::All,
            (false, None | Some("entity")) => TermSelector::entity(q),
            (false, Some("term")) => TermSelector::term(q),
            (false, Some("prefix")) => TermSelector::prefix(q),
            (false, Some(other)) => return Err(CliError::usage(format!("--by {other:?}: expected entity, term or prefix"))),
        };
        print(&reader.top_terms(&selector, field, range()?, a.k).map_err(qerr)?)
    } else if let Some(pair) = &a.cooccur {
        let (ka, kb) = (key(&pair[0], true)?, key(&pair[1], true)?);
        print(&reader.co_occurrence(&ka, &kb, field, a.granularity, range()?, a.mode).map_err(qerr)?)
    } else if let Some(prefix) = &a.entity_search {
        if a.limit == 0 {
            return Err(CliError::usage("--limit must be at least 1"));
        }
        print(&revhist_service::EntitySearch {
            prefix: revhist_core::text::entity_key(prefix),
            hits: reader.entity_search(prefix, a.field, a.limit),
        })
    } else {
        print(&reader.stats())
    }
}

/// Object-safe JSON encoding, so one printer serves every result type.
mod erased {
    pub trait Json {
        fn encode(&self, pretty: bool) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn encode(&self, pretty: bool) -> String {
            let s = if pretty { serde_json::to_string_pretty(self) } else { serde_json::to_string(self) };
            s.expect("query results serialize")
        }
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => ServiceConfig::load(p).map_err(CliError::usage)?,
        None => ServiceConfig::default(),
    };
    if a.config.is_none() && std::env::var_os(INDEX_ENV).is_none() && a.index.is_none() {
        return Err(CliError::usage(format!("no index: pass --index, --config or set {INDEX_ENV}")));
    }
    config = config.with_env();
    if let Some(i) = a.index {
        config.index_dir = i;
    }
    if let Some(b) = a.bind {
        config.bind_address = b;
    }
    config.validate().map_err(CliError::usage)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(ErrorClass::Io, e))?;
    rt.block_on(async move {
        let mut handle = revhist_service::serve(config).await.map_err(|e| {
            let class = match e {
                revhist_service::ServiceError::NotAnIndex(_) | revhist_service::ServiceError::Index(_) => ErrorClass::Data,
                revhist_service::ServiceError::Config(_) => ErrorClass::Usage,
                _ => ErrorClass::Io,
            };
            CliError::new(class, e)
        })?;
        eprintln!("revhist: listening on http://{}", handle.local_addr());
        handle.ready().await.map_err(|e| CliError::new(ErrorClass::Data, e))?;
        eprintln!("revhist: index ready");
        handle.run_until_signal().await.map_err(|e| CliError::new(ErrorClass::Io, e))
    })
}
