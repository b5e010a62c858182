//! One-command pipeline: a declarative TOML file lists stages that run in
//! order, each consuming the previous stage's output.
//!
//! ```toml
//! seed = 42
//! workdir = "run"          # relative to the config file
//! workers = 4              # 0 = one per core
//!
//! [[stages]]
//! stage = "gen-fixture"
//! pages = 200
//! revisions_per_page = 20
//!
//! [[stages]]
//! stage = "partition"
//! mode = "entity"
//! partitions = 8
//! from = "2011-01-01"
//! to = "2013-01-01"
//!
//! [[stages]]
//! stage = "extract"
//! ops = "project:anchors"
//!
//! [[stages]]
//! stage = "index"
//! ```
//!
//! Stage `i` writes under `workdir/NN-<stage>` unless it names an `out`.
//! Existing outputs are refused unless the run is forced.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dump::{open_dump, Compression, DumpError, DumpSource};
use crate::extract::{extract_all, read_emitted, ChainError, ExtractError, OperatorChain};
use crate::fixture::{FixtureConfig, SpikeScenario};
use crate::index::{IndexError, IndexOptions, IndexWriter};
use crate::partition::{
    partition_stream, CustomPredicate, EntitySet, FilterSpec, Normalization, OutputFormat, PartitionError,
    PartitionMode, PartitionPlan,
};
use crate::time::{parse_instant, TimeRange};
use crate::ErrorClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenFixture,
    Partition,
    Extract,
    Index,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::GenFixture => "gen-fixture",
            Stage::Partition => "partition",
            Stage::Extract => "extract",
            Stage::Index => "index",
        }
    }

    /// The stage whose output this stage consumes by default.
    fn upstream(self) -> Option<Stage> {
        match self {
            Stage::GenFixture => None,
            Stage::Partition => Some(Stage::GenFixture),
            Stage::Extract => Some(Stage::Partition),
            Stage::Index => Some(Stage::Extract),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What one stage did. `records_out + dropped_by_filter <= records_in`,
/// except for `gen-fixture`, which has no input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobReport {
    pub stage: Stage,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub records_in: u64,
    pub records_out: u64,
    pub dropped_by_filter: u64,
    pub wall_time_ms: u64,
    pub counters: BTreeMap<String, u64>,
    /// SHA-256 over the stage output (index stage only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

/// Low-level partition filters in the form accepted on the command line and
/// in pipeline files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterOptions {
    /// Inclusive lower bound (`YYYY-MM-DD` or a full timestamp).
    pub from: Option<String>,
    /// Exclusive upper bound.
    pub to: Option<String>,
    pub namespaces: Option<Vec<i32>>,
    #[serde(default)]
    pub articles_only: bool,
    /// `<key>TAB<id>` per line.
    pub entity_list: Option<PathBuf>,
    pub normalization: Option<String>,
    /// Name of a builtin predicate.
    pub custom: Option<String>,
}

impl FilterOptions {
    pub fn build(&self) -> Result<FilterSpec, PipelineError> {
        let config = |message: String| PipelineError::Config { message };
        let bound = |s: &Option<String>, name: &str| {
            s.as_deref().map(|v| parse_instant(v).map_err(|e| config(format!("{name}: {e}")))).transpose()
        };
        let time_range = match (bound(&self.from, "from")?, bound(&self.to, "to")?) {
            (None, None) => None,
            (from, to) => {
                let open = |d: &str| parse_instant(d).expect("valid date");
                let from = from.unwrap_or_else(|| open("0001-01-01"));
                let to = to.unwrap_or_else(|| open("9999-12-31"));
                Some(TimeRange::new(from, to).map_err(|e| config(e.to_string()))?)
            }
        };
        let normalization = match &self.normalization {
            Some(n) => n.parse::<Normalization>().map_err(config)?,
            None => Normalization::default(),
        };
        let entity_set = match &self.entity_list {
            Some(p) => Some(Arc::new(
                EntitySet::load(p, normalization).map_err(|e| config(format!("{}: {e}", p.display())))?,
            )),
            None => None,
        };
        let custom = match &self.custom {
            Some(name) => Some(CustomPredicate::builtin(name).ok_or_else(|| {
                config(format!("unknown predicate {name:?} (expected one of {})", CustomPredicate::BUILTIN.join(", ")))
            })?),
            None => None,
        };
        Ok(FilterSpec {
            time_range,
            namespaces: self.namespaces.as_ref().map(|v| v.iter().copied().collect::<BTreeSet<i32>>()),
            entity_set,
            articles_only: self.articles_only,
            custom,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StageConfig {
    GenFixture {
        #[serde(default = "default_pages")]
        pages: usize,
        #[serde(default = "default_revisions")]
        revisions_per_page: usize,
        #[serde(default, deserialize_with = "toml_dates::date")]
        start_date: Option<NaiveDate>,
        span_days: Option<u32>,
        words_per_revision: Option<usize>,
        #[serde(default = "default_compression")]
        compression: Compression,
        /// `olympics-2012` generates the spike scenario instead.
        scenario: Option<String>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    },
    Partition {
        input: Option<PathBuf>,
        #[serde(default = "default_mode")]
        mode: PartitionMode,
        #[serde(default = "default_partitions")]
        partitions: usize,
        #[serde(default = "default_format")]
        format: OutputFormat,
        #[serde(default, deserialize_with = "toml_dates::instant")]
        from: Option<String>,
        #[serde(default, deserialize_with = "toml_dates::instant")]
        to: Option<String>,
        namespaces: Option<Vec<i32>>,
        #[serde(default)]
        articles_only: bool,
        entity_list: Option<PathBuf>,
        normalization: Option<String>,
        custom: Option<String>,
        out: Option<PathBuf>,
    },
    Extract {
        input: Option<PathBuf>,
        #[serde(default = "default_ops")]
        ops: String,
        out: Option<PathBuf>,
    },
    Index {
        input: Option<PathBuf>,
        #[serde(default)]
        dedup_consecutive: bool,
        out: Option<PathBuf>,
    },
}

/// Dates may be written as TOML date literals or as strings.
mod toml_dates {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Toml(toml::value::Datetime),
    }

    pub fn instant<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
        Ok(Option::<Raw>::deserialize(d)?.map(|r| match r {
            Raw::Text(s) => s,
            Raw::Toml(t) => t.to_string(),
        }))
    }

    pub fn date<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDate>, D::Error> {
        instant(d)?
            .map(|s| crate::time::parse_date(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

fn default_pages() -> usize {
    100
}
fn default_revisions() -> usize {
    20
}
fn default_compression() -> Compression {
    Compression::None
}
fn default_mode() -> PartitionMode {
    PartitionMode::EntityWise
}
fn default_partitions() -> usize {
    8
}
fn default_format() -> OutputFormat {
    OutputFormat::JsonLines
}
fn default_ops() -> String {
    "project:anchors".into()
}

impl StageConfig {
    pub fn stage(&self) -> Stage {
        match self {
            StageConfig::GenFixture { .. } => Stage::GenFixture,
            StageConfig::Partition { .. } => Stage::Partition,
            StageConfig::Extract { .. } => Stage::Extract,
            StageConfig::Index { .. } => Stage::Index,
        }
    }

    /// Filter options of a partition stage.
    pub fn filter(&self) -> Option<FilterOptions> {
        match self {
            StageConfig::Partition { from, to, namespaces, articles_only, entity_list, normalization, custom, .. } => {
                Some(FilterOptions {
                    from: from.clone(),
                    to: to.clone(),
                    namespaces: namespaces.clone(),
                    articles_only: *articles_only,
                    entity_list: entity_list.clone(),
                    normalization: normalization.clone(),
                    custom: custom.clone(),
                })
            }
            _ => None,
        }
    }

    fn input(&self) -> Option<&Path> {
        match self {
            StageConfig::GenFixture { .. } => None,
            StageConfig::Partition { input, .. } | StageConfig::Extract { input, .. } | StageConfig::Index { input, .. } => {
                input.as_deref()
            }
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            StageConfig::GenFixture { out, .. }
            | StageConfig::Partition { out, .. }
            | StageConfig::Extract { out, .. }
            | StageConfig::Index { out, .. } => out.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    pub stages: Vec<StageConfig>,
}

fn default_workdir() -> PathBuf {
    PathBuf::from("pipeline-out")
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("pipeline config: {message}")]
    Config { message: String },
    #[error("{0} already exists (rerun with --force to overwrite)")]
    Exists(PathBuf),
    #[error("stage {index} ({stage}) failed: {source}")]
    Stage { index: usize, stage: Stage, source: StageError },
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Config { .. } | PipelineError::Exists(_) => ErrorClass::Usage,
            PipelineError::Stage { source, .. } => source.class(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl StageError {
    pub fn class(&self) -> ErrorClass {
        match self {
            StageError::Dump(e) => e.class(),
            StageError::Partition(e) => e.class(),
            StageError::Extract(e) => e.class(),
            StageError::Chain(_) | StageError::Usage(_) => ErrorClass::Usage,
            StageError::Index(e) => e.class(),
            StageError::Io { .. } => ErrorClass::Io,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        StageError::Io { path: path.to_path_buf(), source }
    }
}

impl PipelineConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config { message: e.to_string() })?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config { message: format!("{}: {e}", path.display()) })?;
        PipelineConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.workdir);
        for stage in &mut self.stages {
            match stage {
                StageConfig::GenFixture { out, .. } => out.iter_mut().for_each(abs),
                StageConfig::Partition { input, out, entity_list, .. } => {
                    input.iter_mut().chain(out.iter_mut()).chain(entity_list.iter_mut()).for_each(abs)
                }
                StageConfig::Extract { input, out, .. } | StageConfig::Index { input, out, .. } => {
                    input.iter_mut().chain(out.iter_mut()).for_each(abs)
                }
            }
        }
    }

    /// Checks stage order and option syntax without touching any file.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let config = |message: String| PipelineError::Config { message };
        if self.stages.is_empty() {
            return Err(config("no stages".into()));
        }
        let mut prev: Option<Stage> = None;
        for (i, s) in self.stages.iter().enumerate() {
            let stage = s.stage();
            if s.input().is_none() {
                if let Some(up) = stage.upstream() {
                    if prev != Some(up) {
                        return Err(config(format!(
                            "stage {} ({stage}) has no input and does not follow a {up} stage",
                            i + 1
                        )));
                    }
                }
            }
            match s {
                StageConfig::GenFixture { pages, revisions_per_page, scenario, .. } => {
                    if scenario.as_deref().is_some_and(|s| s != "olympics-2012") {
                        return Err(config(format!("stage {}: unknown scenario {scenario:?}", i + 1)));
                    }
                    if scenario.is_none() && (*pages == 0 || *revisions_per_page == 0) {
                        return Err(config(format!("stage {}: pages and revisions_per_page must be positive", i + 1)));
                    }
                }
                StageConfig::Partition { partitions, .. } => {
                    if *partitions == 0 {
                        return Err(config(format!("stage {}: partitions must be at least 1", i + 1)));
                    }
                    let mut filter = s.filter().expect("partition stage");
                    // The entity list is read when the stage runs.
                    filter.entity_list = None;
                    filter.build()?;
                }
                StageConfig::Extract { ops, .. } => {
                    OperatorChain::parse(ops, self.seed).map_err(|e| config(format!("stage {}: {e}", i + 1)))?;
                }
                StageConfig::Index { .. } => {}
            }
            prev = Some(stage);
        }
        Ok(())
    }

    fn default_out(&self, index: usize, stage: &StageConfig) -> PathBuf {
        let dir = self.workdir.join(format!("{:02}-{}", index + 1, stage.stage()));
        match stage {
            StageConfig::GenFixture { compression, .. } => dir.join(match compression {
                Compression::None => "dump.xml",
                Compression::Gzip => "dump.xml.gz",
                Compression::Bzip2 | Compression::Bzip2Multistream => "dump.xml.bz2",
            }),
            _ => dir,
        }
    }

    /// Output path of every stage, in order.
    pub fn outputs(&self) -> Vec<PathBuf> {
        self.stages
            .iter()
            .enumerate()
            .map(|(i, s)| s.out().map(Path::to_path_buf).unwrap_or_else(|| self.default_out(i, s)))
            .collect()
    }
}

/// Runs every stage in order. Reports of completed stages are passed to
/// `on_report` as they finish, so a failing stage still leaves the earlier
/// reports (and outputs) behind.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    force: bool,
    mut on_report: impl FnMut(&JobReport),
) -> Result<Vec<JobReport>, PipelineError> {
    cfg.validate()?;
    let outputs = cfg.outputs();
    for out in &outputs {
        if out.exists() {
            if !force {
                return Err(PipelineError::Exists(out.clone()));
            }
            let removed = if out.is_dir() { fs::remove_dir_all(out) } else { fs::remove_file(out) };
            removed.map_err(|e| PipelineError::Config { message: format!("{}: {e}", out.display()) })?;
        }
    }
    let mut reports = Vec::with_capacity(cfg.stages.len());
    let mut prev_out: Option<PathBuf> = None;
    for (i, (stage, out)) in cfg.stages.iter().zip(&outputs).enumerate() {
        let input = stage.input().map(Path::to_path_buf).or(prev_out.take());
        let started = Instant::now();
        let mut report = run_stage(stage, input.as_deref(), out, cfg.seed, cfg.workers)
            .map_err(|source| PipelineError::Stage { index: i + 1, stage: stage.stage(), source })?;
        report.wall_time_ms = started.elapsed().as_millis() as u64;
        on_report(&report);
        reports.push(report);
        prev_out = Some(out.clone());
    }
    Ok(reports)
}

fn blank_report(stage: Stage, seed: u64, input: Option<&Path>, out: &Path) -> JobReport {
    JobReport {
        stage,
        seed,
        inputs: input.map(Path::to_path_buf).into_iter().collect(),
        outputs: vec![out.to_path_buf()],
        records_in: 0,
        records_out: 0,
        dropped_by_filter: 0,
        wall_time_ms: 0,
        counters: BTreeMap::new(),
        digest: None,
    }
}

fn require_input(input: Option<&Path>) -> Result<&Path, StageError> {
    input.ok_or_else(|| StageError::Usage("stage has no input".into()))
}

fn create_parent(path: &Path) -> Result<(), StageError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| StageError::io(p, e)),
        _ => Ok(()),
    }
}

/// Runs one configured stage.
pub fn run_stage(
    stage: &StageConfig,
    input: Option<&Path>,
    out: &Path,
    seed: u64,
    workers: usize,
) -> Result<JobReport, StageError> {
    let mut report = blank_report(stage.stage(), seed, input, out);
    match stage {
        StageConfig::GenFixture {
            pages,
            revisions_per_page,
            start_date,
            span_days,
            words_per_revision,
            compression,
            scenario,
            seed: stage_seed,
            ..
        } => {
            let seed = stage_seed.unwrap_or(seed);
            report.seed = seed;
            create_parent(out)?;
            let summary = if scenario.is_some() {
                let file = fs::File::create(out).map_err(|e| StageError::io(out, e))?;
                SpikeScenario::olympics_2012(seed)
                    .write_dump(std::io::BufWriter::new(file))
                    .map_err(|e| StageError::io(out, e))?
            } else {
                let mut fc = FixtureConfig {
                    pages: *pages,
                    revisions_per_page: *revisions_per_page,
                    seed,
                    compression: *compression,
                    ..FixtureConfig::default()
                };
                if let Some(d) = start_date {
                    fc.start_date = *d;
                }
                if let Some(s) = span_days {
                    fc.span_days = *s;
                }
                if let Some(w) = words_per_revision {
                    fc.words_per_revision = *w;
                }
                crate::fixture::write_fixture_file(&fc, out).map_err(|e| StageError::io(out, e))?
            };
            report.records_out = summary.revisions;
            report.counters.insert("pages".into(), summary.pages);
            report.counters.insert("xml_bytes".into(), summary.xml_bytes);
        }
        StageConfig::Partition { mode, partitions, format, .. } => {
            let input = require_input(input)?;
            let spec = stage.filter().expect("partition stage").build().map_err(|e| StageError::Usage(e.to_string()))?;
            let mut plan = PartitionPlan::new(*mode, *partitions, *format, out).with_filter(spec);
            plan.writers = workers;
            let manifest = partition_stream(open_dump(DumpSource::path(input))?.revisions(), &plan)?;
            report.records_in = manifest.records_in;
            report.records_out = manifest.records_out;
            report.dropped_by_filter = manifest.dropped_by_filter;
            report.counters.insert("partitions".into(), manifest.partition_count as u64);
            report.counters.insert(
                "bytes_written".into(),
                manifest.partitions.iter().map(|p| p.bytes).sum(),
            );
        }
        StageConfig::Extract { ops, .. } => {
            let input = require_input(input)?;
            let chain = OperatorChain::parse(ops, seed)?;
            let summary = extract_all(input, &chain, out, workers)?;
            let s = &summary.stats;
            report.inputs = summary.inputs.clone();
            report.records_in = s.records_read;
            report.records_out = s.emitted;
            report.dropped_by_filter = s.dropped_by_filter;
            report.counters.insert("dropped_by_sample".into(), s.dropped_by_sample);
            report.counters.insert("payloads_built".into(), s.payloads());
            report.counters.insert("parent_missing".into(), s.parent_missing);
        }
        StageConfig::Index { dedup_consecutive, .. } => {
            let input = require_input(input)?;
            let options = IndexOptions { dedup_consecutive: *dedup_consecutive, ..IndexOptions::default() };
            let summary = index_emitted(input, out, options)?;
            report.inputs = summary.inputs;
            report.records_in = summary.records_read;
            report.records_out = summary.indexed;
            report.counters.insert("duplicates".into(), summary.duplicates);
            report.counters.insert("postings".into(), summary.postings);
            report.counters.insert("segments".into(), summary.segments as u64);
            report.digest = Some(digest_dir(out).map_err(|e| StageError::io(out, e))?);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub inputs: Vec<PathBuf>,
    pub records_read: u64,
    /// Records that were new to the index.
    pub indexed: u64,
    pub duplicates: u64,
    pub postings: u64,
    pub segments: usize,
}

/// Emitted-record files behind `input`: a single file, or every `.jsonl`
/// file of a directory in name order.
pub fn emitted_files(input: &Path) -> Result<Vec<PathBuf>, StageError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(input).map_err(|e| StageError::io(input, e))? {
        let path = entry.map_err(|e| StageError::io(input, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Indexes every emitted record behind `input` into the index at
/// `index_dir` (created if missing), then closes the writer.
pub fn index_emitted(input: &Path, index_dir: &Path, options: IndexOptions) -> Result<IngestSummary, StageError> {
    let inputs = emitted_files(input)?;
    let mut writer = IndexWriter::open(index_dir, options)?;
    let mut summary = IngestSummary { inputs: inputs.clone(), ..IngestSummary::default() };
    for path in &inputs {
        for rec in read_emitted(path)? {
            let rec = rec?;
            summary.records_read += 1;
            let ack = writer.index_record(&rec)?;
            if ack.duplicate {
                summary.duplicates += 1;
            } else {
                summary.indexed += 1;
                summary.postings += ack.postings as u64;
            }
        }
    }
    writer.close()?;
    summary.segments = writer.segments().len();
    Ok(summary)
}

/// SHA-256 over the sorted (name, content) pairs of the regular files in
/// `dir`, skipping lock and temporary files.
pub fn digest_dir(dir: &Path) -> std::io::Result<String> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| !n.ends_with(".lock") && !n.ends_with(".tmp"))
        .collect();
    names.sort();
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    for name in names {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        let mut f = fs::File::open(dir.join(&name))?;
        let len = f.metadata()?.len();
        h.update(len.to_le_bytes());
        loop {
            let n = f.read(&mut buf)?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
        }
    }
    Ok(hex::encode(h.finalize()))
}
