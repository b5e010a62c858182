//! Repartitioning of a revision stream into independent split files.
//!
//! Entity-wise mode routes every revision of a page to the same file via a
//! fixed hash of the page id; document-wise mode deals revisions round-robin
//! and relies on `parent_id` to keep lineage. Each output file is owned by
//! exactly one writer thread.

mod filter;
mod records;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crossbeam_channel::{bounded, Receiver};
use serde::{Deserialize, Serialize};

use crate::dump::writer::{DumpWriter, XmlWriteError};
use crate::dump::{DumpError, RevisionRecord};
use crate::hash::{splitmix64, ROUTING_HASH_NAME};
use crate::time::Timestamp;
use crate::ErrorClass;

pub use filter::{
    apply_filter, match_entity, CustomPredicate, EntitySet, EntitySetError, EntitySetSummary, FilterSpec,
    FilterSummary, Normalization,
};
pub use records::{read_partition, JsonRevision, PartitionReader};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    #[serde(alias = "entity")]
    EntityWise,
    #[serde(alias = "document")]
    DocumentWise,
}

impl fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMode::EntityWise => "entity",
            PartitionMode::DocumentWise => "document",
        })
    }
}

impl FromStr for PartitionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "entity" | "entity-wise" => Ok(PartitionMode::EntityWise),
            "document" | "document-wise" => Ok(PartitionMode::DocumentWise),
            other => Err(format!("unknown partition mode {other:?} (expected entity or document)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Xml,
    #[serde(alias = "jsonl")]
    JsonLines,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Xml => "xml",
            OutputFormat::JsonLines => "jsonl",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_str()?;
        if name.ends_with(".jsonl") || name.ends_with(".json") {
            Some(OutputFormat::JsonLines)
        } else if name.ends_with(".xml") || name.ends_with(".xml.gz") || name.ends_with(".xml.bz2") {
            Some(OutputFormat::Xml)
        } else {
            None
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Xml => "xml",
            OutputFormat::JsonLines => "jsonl",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "xml" => Ok(OutputFormat::Xml),
            "jsonl" | "json-lines" | "json" => Ok(OutputFormat::JsonLines),
            other => Err(format!("unknown output format {other:?} (expected xml or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    pub partition_count: usize,
    pub output_format: OutputFormat,
    pub filter: FilterSpec,
    pub output_dir: PathBuf,
    /// Writer threads; each owns `partition_count / writers` files. 0 means
    /// one per available core.
    pub writers: usize,
}

impl PartitionPlan {
    pub fn new(mode: PartitionMode, partition_count: usize, output_format: OutputFormat, output_dir: impl Into<PathBuf>) -> Self {
        PartitionPlan {
            mode,
            partition_count,
            output_format,
            filter: FilterSpec::default(),
            output_dir: output_dir.into(),
            writers: 0,
        }
    }

    pub fn with_filter(mut self, filter: FilterSpec) -> Self {
        self.filter = filter;
        self
    }

    pub fn file_name(&self, index: usize) -> String {
        format!("part-{index:05}.{}", self.output_format.extension())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("revision {revision_id} cannot be written as {format}: {message}")]
    Format { revision_id: u64, format: OutputFormat, message: String },
    #[error("partition record at line {line}: {message}")]
    BadRecord { line: u64, message: String },
    #[error("invalid partition plan: {0}")]
    Plan(String),
    #[error("bad manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl PartitionError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PartitionError::Io { path: path.to_path_buf(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            PartitionError::Dump(e) => e.class(),
            PartitionError::Io { .. } => ErrorClass::Io,
            PartitionError::Plan(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

/// Partition index for a page; a pure function of its two arguments.
pub fn entity_route(page_id: u64, partition_count: usize) -> usize {
    assert!(partition_count >= 1, "partition_count must be positive");
    (splitmix64(page_id) % partition_count as u64) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionInfo {
    pub index: usize,
    /// Relative to the manifest's directory.
    pub path: String,
    pub revisions: u64,
    pub bytes: u64,
    pub min_timestamp: Option<Timestamp>,
    pub max_timestamp: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub hash: String,
    pub mode: PartitionMode,
    pub format: OutputFormat,
    pub partition_count: usize,
    pub filter: FilterSummary,
    pub records_in: u64,
    pub records_out: u64,
    pub dropped_by_filter: u64,
    pub partitions: Vec<PartitionInfo>,
}

impl PartitionManifest {
    pub fn load(dir: &Path) -> Result<Self, PartitionError> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| PartitionError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| PartitionError::Manifest { path, message: e.to_string() })
    }

    pub fn store(&self, dir: &Path) -> Result<(), PartitionError> {
        let path = dir.join(MANIFEST_FILE);
        let mut json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        json.push(b'\n');
        std::fs::write(&path, json).map_err(|e| PartitionError::io(&path, e))
    }

    pub fn paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.partitions.iter().map(|p| dir.join(&p.path)).collect()
    }
}

enum Sink {
    Json(BufWriter<File>),
    Xml(DumpWriter<BufWriter<File>>),
}

struct OpenPartition {
    path: PathBuf,
    sink: Sink,
    info: PartitionInfo,
    line: Vec<u8>,
}

impl OpenPartition {
    fn create(plan: &PartitionPlan, index: usize) -> Result<Self, PartitionError> {
        let name = plan.file_name(index);
        let path = plan.output_dir.join(&name);
        let file = File::create(&path).map_err(|e| PartitionError::io(&path, e))?;
        let out = BufWriter::with_capacity(1 << 18, file);
        let sink = match plan.output_format {
            OutputFormat::JsonLines => Sink::Json(out),
            OutputFormat::Xml => Sink::Xml(DumpWriter::new(out)),
        };
        let info = PartitionInfo { index, path: name, revisions: 0, bytes: 0, min_timestamp: None, max_timestamp: None };
        Ok(OpenPartition { path, sink, info, line: Vec::new() })
    }

    fn write(&mut self, rec: &RevisionRecord) -> Result<(), PartitionError> {
        match &mut self.sink {
            Sink::Json(out) => {
                self.line.clear();
                serde_json::to_writer(&mut self.line, &records::JsonRevisionRef::from(rec)).map_err(|e| {
                    PartitionError::Format {
                        revision_id: rec.revision_id,
                        format: OutputFormat::JsonLines,
                        message: e.to_string(),
                    }
                })?;
                self.line.push(b'\n');
                out.write_all(&self.line).map_err(|e| PartitionError::io(&self.path, e))?;
            }
            Sink::Xml(w) => w.write_revision(rec).map_err(|e| match e {
                XmlWriteError::Io(e) => PartitionError::io(&self.path, e),
                other => PartitionError::Format {
                    revision_id: rec.revision_id,
                    format: OutputFormat::Xml,
                    message: other.to_string(),
                },
            })?,
        }
        let info = &mut self.info;
        info.revisions += 1;
        info.min_timestamp = Some(info.min_timestamp.map_or(rec.timestamp, |t| t.min(rec.timestamp)));
        info.max_timestamp = Some(info.max_timestamp.map_or(rec.timestamp, |t| t.max(rec.timestamp)));
        Ok(())
    }

    fn close(self) -> Result<PartitionInfo, PartitionError> {
        let path = self.path;
        let mut out = match self.sink {
            Sink::Json(out) => out,
            Sink::Xml(w) => w.finish().map_err(|e| PartitionError::io(&path, e))?,
        };
        out.flush().map_err(|e| PartitionError::io(&path, e))?;
        let file = out.into_inner().map_err(|e| PartitionError::io(&path, e.into_error()))?;
        file.sync_data().map_err(|e| PartitionError::io(&path, e))?;
        let mut info = self.info;
        info.bytes = file.metadata().map_err(|e| PartitionError::io(&path, e))?.len();
        Ok(info)
    }
}

fn writer_loop(
    plan: &PartitionPlan,
    owned: Vec<usize>,
    rx: Receiver<(usize, RevisionRecord)>,
) -> Result<Vec<PartitionInfo>, PartitionError> {
    let mut open = Vec::with_capacity(owned.len());
    for &index in &owned {
        open.push(OpenPartition::create(plan, index)?);
    }
    let threads = owned.len().max(1);
    let stride = owned.get(1).map_or(1, |b| b - owned[0]);
    for (index, rec) in rx {
        // Partitions owned by one thread are `first, first + stride, ...`.
        let slot = (index - owned[0]) / stride;
        debug_assert!(slot < threads);
        open[slot].write(&rec)?;
    }
    open.into_iter().map(OpenPartition::close).collect()
}

/// Routes every revision that passes the plan's filter into one of
/// `partition_count` files and writes `manifest.json` next to them.
pub fn partition_stream<I>(stream: I, plan: &PartitionPlan) -> Result<PartitionManifest, PartitionError>
where
    I: IntoIterator<Item = Result<RevisionRecord, DumpError>>,
{
    let n = plan.partition_count;
    if n == 0 {
        return Err(PartitionError::Plan("partition_count must be at least 1".into()));
    }
    std::fs::create_dir_all(&plan.output_dir).map_err(|e| PartitionError::io(&plan.output_dir, e))?;
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let threads = if plan.writers == 0 { cores } else { plan.writers }.clamp(1, n);

    let mut records_in = 0u64;
    let mut dropped = 0u64;
    let mut infos = Vec::with_capacity(n);
    let mut first_error: Option<PartitionError> = None;

    std::thread::scope(|scope| {
        let mut senders = Vec::with_capacity(threads);
        let mut handles = Vec::with_capacity(threads);
        for t in 0..threads {
            let (tx, rx) = bounded::<(usize, RevisionRecord)>(256);
            let owned: Vec<usize> = (t..n).step_by(threads).collect();
            senders.push(tx);
            handles.push(scope.spawn(move || writer_loop(plan, owned, rx)));
        }
        let mut next_doc = 0usize;
        for item in stream {
            let rec = match item {
                Ok(r) => r,
                Err(e) => {
                    first_error = Some(e.into());
                    break;
                }
            };
            records_in += 1;
            if !apply_filter(&rec, &plan.filter) {
                dropped += 1;
                continue;
            }
            let index = match plan.mode {
                PartitionMode::EntityWise => entity_route(rec.page.page_id, n),
                PartitionMode::DocumentWise => {
                    let i = next_doc;
                    next_doc = (next_doc + 1) % n;
                    i
                }
            };
            if senders[index % threads].send((index, rec)).is_err() {
                // The writer died; its error is collected on join.
                break;
            }
        }
        drop(senders);
        for h in handles {
            match h.join().expect("partition writer panicked") {
                Ok(mut v) => infos.append(&mut v),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    infos.sort_by_key(|p| p.index);
    let records_out = infos.iter().map(|p| p.revisions).sum();
    let manifest = PartitionManifest {
        hash: ROUTING_HASH_NAME.to_string(),
        mode: plan.mode,
        format: plan.output_format,
        partition_count: n,
        filter: plan.filter.summary(),
        records_in,
        records_out,
        dropped_by_filter: dropped,
        partitions: infos,
    };
    manifest.store(&plan.output_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_partition_routes_to_zero() {
        for id in [1, 10, 12345, u64::MAX] {
            assert_eq!(entity_route(id, 1), 0);
        }
    }

    #[test]
    fn routing_is_deterministic() {
        assert_eq!(entity_route(10, 8), entity_route(10, 8));
    }

    #[test]
    fn routing_is_balanced() {
        let mut load = [0u32; 8];
        for id in 1..=100_000u64 {
            load[entity_route(id, 8)] += 1;
        }
        let max = *load.iter().max().unwrap() as f64;
        let min = *load.iter().min().unwrap() as f64;
        assert!(max / min < 1.1, "{load:?}");
    }

    #[test]
    fn formats_and_modes_parse() {
        assert_eq!("entity".parse::<PartitionMode>().unwrap(), PartitionMode::EntityWise);
        assert_eq!("jsonl".parse::<OutputFormat>().unwrap(), OutputFormat::JsonLines);
        assert_eq!(OutputFormat::from_path(Path::new("a/part-00001.jsonl")), Some(OutputFormat::JsonLines));
        assert!("shuffle".parse::<PartitionMode>().is_err());
    }
}
