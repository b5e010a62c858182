use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::RevisionRecord;
use crate::partition::{PartitionManifest, PartitionReader, MANIFEST_FILE};
use crate::text::tokenize;
use crate::wikitext::{extract_anchors, strip_markup};

use super::chain::{OperatorChain, Verdict};
use super::diff::RevisionDelta;
use super::record::*;
use super::ExtractError;

/// Counters of one transform. `payloads_built` is the work measure: a
/// revision rejected by a filter or sample never reaches payload
/// construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformStats {
    pub records_read: u64,
    pub dropped_by_filter: u64,
    pub dropped_by_sample: u64,
    pub emitted: u64,
    pub payloads_built: BTreeMap<RecordKind, u64>,
    /// Deltas whose named parent was not available in the partition.
    pub parent_missing: u64,
}

impl TransformStats {
    pub fn payloads(&self) -> u64 {
        self.payloads_built.values().sum()
    }

    pub fn absorb(&mut self, other: &TransformStats) {
        self.records_read += other.records_read;
        self.dropped_by_filter += other.dropped_by_filter;
        self.dropped_by_sample += other.dropped_by_sample;
        self.emitted += other.emitted;
        self.parent_missing += other.parent_missing;
        for (k, v) in &other.payloads_built {
            *self.payloads_built.entry(*k).or_default() += v;
        }
    }
}

/// Builds the payload of `kind` for one revision. `parent_text` is only
/// consulted for deltas.
pub fn build_payload(kind: RecordKind, record: &RevisionRecord, parent_text: Option<&str>) -> Payload {
    match kind {
        RecordKind::Metadata => Payload::Metadata(MetadataPayload {
            parent_id: record.parent_id,
            contributor: record.contributor.clone(),
            comment: record.comment.clone(),
            text_bytes: record.text_bytes() as u64,
            redirect: record.page.redirect_target.clone(),
        }),
        RecordKind::Fulltext => Payload::Fulltext(FulltextPayload::from_tokens(tokenize(&strip_markup(&record.text)))),
        RecordKind::Anchors => Payload::Anchors(AnchorsPayload { links: extract_anchors(record.page.page_id, &record.text) }),
        RecordKind::Delta => {
            Payload::Delta(RevisionDelta::build(record.revision_id, record.parent_id, parent_text, &record.text))
        }
    }
}

/// Surviving revisions of one partition, emitted in (page, timestamp)
/// order with payloads built on demand.
pub struct Transform {
    chain: OperatorChain,
    kind: RecordKind,
    survivors: std::vec::IntoIter<RevisionRecord>,
    /// Parent texts for deltas; `None` marks a parent whose text is deleted.
    parents: HashMap<u64, Option<Arc<str>>>,
    stats: TransformStats,
}

impl Transform {
    fn new(chain: &OperatorChain, mut survivors: Vec<RevisionRecord>, stats: TransformStats) -> Self {
        let sorted = survivors.windows(2).all(|w| order_key(&w[0]) <= order_key(&w[1]));
        if !sorted {
            survivors.sort_by_key(order_key);
        }
        Transform {
            chain: chain.clone(),
            kind: chain.kind(),
            survivors: survivors.into_iter(),
            parents: HashMap::new(),
            stats,
        }
    }

    pub fn stats(&self) -> &TransformStats {
        &self.stats
    }

    pub fn kind(&self) -> RecordKind {
        self.kind
    }

    /// Parent ids named by survivors.
    fn wanted_parents(&self) -> HashSet<u64> {
        self.survivors.as_slice().iter().filter_map(|r| r.parent_id).collect()
    }

    fn offer_parent(&mut self, wanted: &HashSet<u64>, rec: &RevisionRecord) {
        if wanted.contains(&rec.revision_id) {
            let text = (!rec.deleted).then(|| Arc::from(rec.text.as_str()));
            self.parents.insert(rec.revision_id, text);
        }
    }
}

fn order_key(r: &RevisionRecord) -> (u64, crate::time::Timestamp, u64) {
    (r.page.page_id, r.timestamp, r.revision_id)
}

impl Iterator for Transform {
    type Item = EmittedRecord;

    fn next(&mut self) -> Option<EmittedRecord> {
        let rec = self.survivors.next()?;
        let parent_text = match (self.kind, rec.parent_id) {
            (RecordKind::Delta, Some(pid)) => {
                let text = self.parents.get(&pid).cloned().flatten();
                if text.is_none() {
                    self.stats.parent_missing += 1;
                }
                text
            }
            _ => None,
        };
        let payload = build_payload(self.kind, &rec, parent_text.as_deref());
        *self.stats.payloads_built.entry(self.kind).or_default() += 1;
        self.stats.emitted += 1;
        let mut attributes = BTreeMap::new();
        if let Some(id) = self.chain.kb_id(&rec) {
            attributes.insert("kb_id".to_string(), id);
        }
        Some(EmittedRecord {
            key: RecordKey { page_id: rec.page.page_id, rev_id: rec.revision_id },
            title: rec.page.title,
            ns: rec.page.namespace,
            timestamp: rec.timestamp,
            kind: self.kind,
            deleted: rec.deleted,
            payload,
            attributes,
        })
    }
}

fn select<E>(
    records: impl IntoIterator<Item = Result<RevisionRecord, E>>,
    chain: &OperatorChain,
) -> Result<(Vec<RevisionRecord>, TransformStats), E> {
    let mut stats = TransformStats::default();
    let mut survivors = Vec::new();
    for rec in records {
        let rec = rec?;
        stats.records_read += 1;
        match chain.verdict(&rec) {
            Verdict::Keep => survivors.push(rec),
            Verdict::Filtered => stats.dropped_by_filter += 1,
            Verdict::Sampled => stats.dropped_by_sample += 1,
        }
    }
    Ok((survivors, stats))
}

/// Runs `chain` over the partition file at `path` (xml or json-lines).
/// Deltas take parent texts from anywhere in the same file, including
/// revisions the chain dropped.
pub fn transform(path: &Path, chain: &OperatorChain) -> Result<Transform, ExtractError> {
    let (survivors, stats) = select(PartitionReader::open(path)?, chain)?;
    let mut t = Transform::new(chain, survivors, stats);
    if t.kind == RecordKind::Delta {
        let wanted = t.wanted_parents();
        if !wanted.is_empty() {
            for rec in PartitionReader::open(path)? {
                t.offer_parent(&wanted, &rec?);
            }
        }
    }
    Ok(t)
}

/// In-memory variant of [`transform`]; `records` plays the role of the
/// partition.
pub fn transform_records(records: Vec<RevisionRecord>, chain: &OperatorChain) -> Transform {
    let wanted: HashSet<u64> = if chain.kind() == RecordKind::Delta {
        records.iter().filter_map(|r| r.parent_id).collect()
    } else {
        HashSet::new()
    };
    let mut parents = HashMap::new();
    for rec in &records {
        if wanted.contains(&rec.revision_id) {
            parents.insert(rec.revision_id, (!rec.deleted).then(|| Arc::from(rec.text.as_str())));
        }
    }
    let (survivors, stats) =
        select(records.into_iter().map(Ok::<_, std::convert::Infallible>), chain).unwrap_or_else(|e| match e {});
    let mut t = Transform::new(chain, survivors, stats);
    t.parents = parents;
    t
}

/// Partition files behind `input`: a partitioner output directory (via its
/// manifest), any directory of `.jsonl`/`.xml` files, or a single file.
pub fn resolve_partitions(input: &Path) -> Result<Vec<PathBuf>, ExtractError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if input.join(MANIFEST_FILE).is_file() {
        return Ok(PartitionManifest::load(input)?.paths(input));
    }
    let mut out = Vec::new();
    let entries = std::fs::read_dir(input).map_err(|e| ExtractError::io(input, e))?;
    for entry in entries {
        let path = entry.map_err(|e| ExtractError::io(input, e))?.path();
        if crate::partition::OutputFormat::from_path(&path).is_some() && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Writes the emitted records of one partition as json-lines.
pub fn extract_partition(input: &Path, chain: &OperatorChain, out_path: &Path) -> Result<TransformStats, ExtractError> {
    let mut t = transform(input, chain)?;
    let file = File::create(out_path).map_err(|e| ExtractError::io(out_path, e))?;
    let mut out = BufWriter::with_capacity(1 << 18, file);
    let mut line = Vec::new();
    for rec in t.by_ref() {
        line.clear();
        serde_json::to_writer(&mut line, &rec).expect("records serialize");
        line.push(b'\n');
        out.write_all(&line).map_err(|e| ExtractError::io(out_path, e))?;
    }
    out.flush().map_err(|e| ExtractError::io(out_path, e))?;
    Ok(t.stats().clone())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub stats: TransformStats,
}

/// Transforms every partition behind `input` in parallel (at most `workers`
/// at a time, 0 meaning one per core), writing `emitted-NNNNN.jsonl` files
/// into `out_dir`.
pub fn extract_all(input: &Path, chain: &OperatorChain, out_dir: &Path, workers: usize) -> Result<ExtractSummary, ExtractError> {
    let inputs = resolve_partitions(input)?;
    std::fs::create_dir_all(out_dir).map_err(|e| ExtractError::io(out_dir, e))?;
    let outputs: Vec<PathBuf> = (0..inputs.len()).map(|i| out_dir.join(format!("emitted-{i:05}.jsonl"))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    let pool = builder.build().map_err(|e| ExtractError::io(out_dir, std::io::Error::other(e)))?;
    let results: Vec<Result<TransformStats, ExtractError>> = pool.install(|| {
        inputs.par_iter().zip(outputs.par_iter()).map(|(i, o)| extract_partition(i, chain, o)).collect()
    });
    let mut stats = TransformStats::default();
    for r in results {
        stats.absorb(&r?);
    }
    Ok(ExtractSummary { inputs, outputs, stats })
}

/// Streams emitted records from a json-lines file, validating each.
pub fn read_emitted(path: &Path) -> Result<impl Iterator<Item = Result<EmittedRecord, ExtractError>>, ExtractError> {
    let file = File::open(path).map_err(|e| ExtractError::io(path, e))?;
    let owned = path.to_path_buf();
    Ok(BufReader::with_capacity(1 << 16, file).lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) if l.trim().is_empty() => return None,
            Ok(l) => l,
            Err(e) => return Some(Err(ExtractError::io(&owned, e))),
        };
        let bad = |message: String| ExtractError::BadRecord { path: owned.clone(), line: i as u64 + 1, message };
        Some(
            serde_json::from_str::<EmittedRecord>(&line)
                .map_err(|e| bad(e.to_string()))
                .and_then(|r| r.validate().map(|_| r).map_err(bad)),
        )
    }))
}
