use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::extract::{EmittedRecord, RecordKind};
use crate::text::TOKENIZER_ID;
use crate::time::Timestamp;

use super::reader::IndexReader;
use super::segment::{DocKey, PostingBuffer, Segment};
use super::{record_postings, IndexError};

pub const META_FILE: &str = "meta.json";
pub const FORMAT_VERSION: u32 = 1;
/// Segments of one size tier that trigger a merge.
pub const MERGE_FACTOR: usize = 4;
const LOCK_FILE: &str = "write.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: u64,
    pub file: String,
    pub rows: u64,
    pub doc_count: u64,
    pub min_timestamp: Option<Timestamp>,
    pub max_timestamp: Option<Timestamp>,
    /// CRC-32 of the whole file, hex.
    pub crc32: String,
}

/// Contents of `meta.json`: the published segment list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub tokenizer: String,
    pub next_segment_id: u64,
    pub segments: Vec<SegmentInfo>,
}

impl IndexMeta {
    fn empty() -> Self {
        IndexMeta { format_version: FORMAT_VERSION, tokenizer: TOKENIZER_ID.to_string(), next_segment_id: 1, segments: Vec::new() }
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let path = dir.join(META_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(IndexError::Missing(dir.to_path_buf())),
            Err(e) => return Err(IndexError::io(&path, e)),
        };
        let meta: IndexMeta =
            serde_json::from_slice(&bytes).map_err(|e| IndexError::Corrupt { path: path.clone(), message: e.to_string() })?;
        if meta.format_version != FORMAT_VERSION {
            return Err(IndexError::Incompatible {
                path: dir.to_path_buf(),
                message: format!("format version {} (this build reads {FORMAT_VERSION})", meta.format_version),
            });
        }
        if meta.tokenizer != TOKENIZER_ID {
            return Err(IndexError::Incompatible {
                path: dir.to_path_buf(),
                message: format!("built with tokenizer {} (this build uses {TOKENIZER_ID})", meta.tokenizer),
            });
        }
        Ok(meta)
    }
}

pub(crate) fn segment_file_name(id: u64) -> String {
    format!("seg-{id:08}.rhs")
}

/// Reads and verifies one published segment.
pub(crate) fn load_segment(dir: &Path, info: &SegmentInfo) -> Result<Segment, IndexError> {
    let path = dir.join(&info.file);
    let bytes = fs::read(&path).map_err(|e| IndexError::io(&path, e))?;
    let crc = format!("{:08x}", crc32fast::hash(&bytes));
    if crc != info.crc32 {
        return Err(IndexError::Corrupt { path, message: format!("file checksum {crc} does not match meta {}", info.crc32) });
    }
    let seg = Segment::decode(&bytes, &path)?;
    if seg.id != info.id || seg.rows.len() as u64 != info.rows || seg.doc_count() != info.doc_count {
        return Err(IndexError::Corrupt { path, message: "segment does not match its meta entry".into() });
    }
    Ok(seg)
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), IndexError> {
    let tmp = dir.join(format!("{name}.tmp"));
    let path = dir.join(name);
    let mut f = File::create(&tmp).map_err(|e| IndexError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| IndexError::io(&tmp, e))?;
    f.sync_all().map_err(|e| IndexError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| IndexError::io(&path, e))?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexOptions {
    /// Buffered rows that trigger an automatic (staged, not yet visible)
    /// seal.
    pub auto_seal_rows: usize,
    /// Run the size-tiered merge policy after each refresh.
    pub auto_merge: bool,
    /// Skip a record whose postings equal those of the previous record of
    /// the same page and kind indexed by this writer. Off by default; with
    /// it on, results depend on ingestion order.
    pub dedup_consecutive: bool,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { auto_seal_rows: 4_000_000, auto_merge: true, dedup_consecutive: false }
    }
}

/// Outcome of indexing one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexAck {
    pub postings: usize,
    /// The record was already indexed (or deduplicated) and changed nothing.
    pub duplicate: bool,
}

/// The single writer of an index directory. Holds `write.lock` until closed
/// or dropped. Records become visible to readers at [`IndexWriter::refresh`];
/// dropping a writer without `close` discards unrefreshed records.
pub struct IndexWriter {
    dir: PathBuf,
    options: IndexOptions,
    meta: IndexMeta,
    published: Vec<Arc<Segment>>,
    staged: Vec<(SegmentInfo, Arc<Segment>)>,
    buffer: PostingBuffer,
    keys: HashSet<DocKey>,
    last_postings: HashMap<(u8, u64), u64>,
    reader: IndexReader,
    locked: bool,
}

fn kind_code(kind: RecordKind) -> u8 {
    match kind {
        RecordKind::Metadata => 0,
        RecordKind::Fulltext => 1,
        RecordKind::Anchors => 2,
        RecordKind::Delta => 3,
    }
}

impl IndexWriter {
    /// Opens the index in `dir`, creating an empty one if the directory has
    /// no `meta.json`.
    pub fn open(dir: &Path, options: IndexOptions) -> Result<Self, IndexError> {
        fs::create_dir_all(dir).map_err(|e| IndexError::io(dir, e))?;
        let lock = dir.join(LOCK_FILE);
        OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => IndexError::Locked(dir.to_path_buf()),
            _ => IndexError::io(&lock, e),
        })?;
        let mut w = IndexWriter {
            dir: dir.to_path_buf(),
            options,
            meta: IndexMeta::empty(),
            published: Vec::new(),
            staged: Vec::new(),
            buffer: PostingBuffer::default(),
            keys: HashSet::new(),
            last_postings: HashMap::new(),
            reader: IndexReader::empty(),
            locked: true,
        };
        match IndexMeta::load(dir) {
            Ok(meta) => {
                for info in &meta.segments {
                    let seg = load_segment(dir, info)?;
                    w.keys.extend(seg.docs.iter().map(|d| d.0));
                    w.published.push(Arc::new(seg));
                }
                w.meta = meta;
            }
            Err(IndexError::Missing(_)) => w.write_meta()?,
            Err(e) => return Err(e),
        }
        w.remove_orphans()?;
        w.reader = IndexReader::from_segments(w.published.clone());
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn check_open(&self) -> Result<(), IndexError> {
        if self.locked { Ok(()) } else { Err(IndexError::Closed) }
    }

    /// Segment files not referenced by meta are leftovers of an interrupted
    /// writer.
    fn remove_orphans(&self) -> Result<(), IndexError> {
        let live: HashSet<&str> = self.meta.segments.iter().map(|s| s.file.as_str()).collect();
        for entry in fs::read_dir(&self.dir).map_err(|e| IndexError::io(&self.dir, e))? {
            let entry = entry.map_err(|e| IndexError::io(&self.dir, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            let is_segment = name.starts_with("seg-") && (name.ends_with(".rhs") || name.ends_with(".rhs.tmp"));
            if (is_segment && !live.contains(name)) || name == "meta.json.tmp" {
                fs::remove_file(entry.path()).map_err(|e| IndexError::io(entry.path(), e))?;
            }
        }
        Ok(())
    }

    fn write_meta(&self) -> Result<(), IndexError> {
        let mut json = serde_json::to_vec_pretty(&self.meta).expect("meta serializes");
        json.push(b'\n');
        write_atomic(&self.dir, META_FILE, &json)
    }

    /// Adds the postings of one anchors or fulltext record. Indexing a
    /// record whose (kind, page, revision) is already present is a no-op.
    pub fn index_record(&mut self, record: &EmittedRecord) -> Result<IndexAck, IndexError> {
        self.check_open()?;
        let postings = record_postings(record)?;
        let key = DocKey { kind: kind_code(record.kind), page_id: record.key.page_id, rev_id: record.key.rev_id };
        if self.keys.contains(&key) {
            return Ok(IndexAck { postings: 0, duplicate: true });
        }
        if self.options.dedup_consecutive {
            let fingerprint = {
                use std::hash::{Hash, Hasher};
                let mut h = std::collections::hash_map::DefaultHasher::new();
                postings.hash(&mut h);
                h.finish()
            };
            let prev = self.last_postings.insert((key.kind, key.page_id), fingerprint);
            if prev == Some(fingerprint) && !postings.is_empty() {
                self.keys.insert(key);
                self.buffer.add_doc(key, String::new());
                return Ok(IndexAck { postings: 0, duplicate: true });
            }
        }
        let ts = record.timestamp.unix();
        for p in &postings {
            self.buffer.add(p.field, &p.term, &p.entity, ts, p.count, p.frequency);
        }
        let attrs = if record.attributes.is_empty() {
            String::new()
        } else {
            serde_json::to_string(&record.attributes).expect("attributes serialize")
        };
        self.buffer.add_doc(key, attrs);
        self.keys.insert(key);
        if self.buffer.rows() >= self.options.auto_seal_rows {
            self.seal_segment()?;
        }
        Ok(IndexAck { postings: postings.len(), duplicate: false })
    }

    /// Seals the buffer into a new segment file. The segment is staged:
    /// readers see it after the next refresh. An empty buffer gives an
    /// empty segment.
    pub fn seal_segment(&mut self) -> Result<SegmentInfo, IndexError> {
        self.check_open()?;
        let id = self.meta.next_segment_id;
        self.meta.next_segment_id += 1;
        let seg = std::mem::take(&mut self.buffer).seal(id);
        let info = self.persist(&seg)?;
        self.staged.push((info.clone(), Arc::new(seg)));
        Ok(info)
    }

    fn persist(&self, seg: &Segment) -> Result<SegmentInfo, IndexError> {
        let bytes = seg.encode();
        let file = segment_file_name(seg.id);
        write_atomic(&self.dir, &file, &bytes)?;
        Ok(SegmentInfo {
            id: seg.id,
            file,
            rows: seg.rows.len() as u64,
            doc_count: seg.doc_count(),
            min_timestamp: seg.min_ts.map(Timestamp::from_unix),
            max_timestamp: seg.max_ts.map(Timestamp::from_unix),
            crc32: format!("{:08x}", crc32fast::hash(&bytes)),
        })
    }

    /// Makes every acknowledged record visible: seals the buffer, publishes
    /// staged segments in `meta.json`, then applies the merge policy. A
    /// refresh with nothing pending changes nothing.
    pub fn refresh(&mut self) -> Result<(), IndexError> {
        self.check_open()?;
        if !self.buffer.is_empty() {
            self.seal_segment()?;
        }
        if self.staged.is_empty() {
            return Ok(());
        }
        for (info, seg) in std::mem::take(&mut self.staged) {
            self.meta.segments.push(info);
            self.published.push(seg);
        }
        self.write_meta()?;
        if self.options.auto_merge {
            self.apply_merge_policy()?;
        }
        self.reader = IndexReader::from_segments(self.published.clone());
        Ok(())
    }

    /// Size tier: floor(log4(rows)).
    fn tier(rows: u64) -> u32 {
        if rows <= 1 { 0 } else { (63 - rows.leading_zeros()) / 2 }
    }

    fn apply_merge_policy(&mut self) -> Result<(), IndexError> {
        loop {
            let mut tiers: HashMap<u32, Vec<u64>> = HashMap::new();
            for info in &self.meta.segments {
                tiers.entry(Self::tier(info.rows)).or_default().push(info.id);
            }
            let full = tiers.into_iter().filter(|(_, ids)| ids.len() >= MERGE_FACTOR).min_by_key(|(t, _)| *t);
            match full {
                Some((_, ids)) => {
                    self.merge_published(&ids)?;
                }
                None => return Ok(()),
            }
        }
    }

    /// Replaces the given published segments by one merged segment.
    pub fn merge_segments(&mut self, ids: &[u64]) -> Result<SegmentInfo, IndexError> {
        self.check_open()?;
        let info = self.merge_published(ids)?;
        self.reader = IndexReader::from_segments(self.published.clone());
        Ok(info)
    }

    fn merge_published(&mut self, ids: &[u64]) -> Result<SegmentInfo, IndexError> {
        let mut inputs = Vec::with_capacity(ids.len());
        for id in ids {
            let seg = self.published.iter().find(|s| s.id == *id).ok_or(IndexError::UnknownSegment(*id))?;
            inputs.push(seg.clone());
        }
        let id = self.meta.next_segment_id;
        self.meta.next_segment_id += 1;
        let refs: Vec<&Segment> = inputs.iter().map(|s| s.as_ref()).collect();
        let merged = Segment::merge(id, &refs);
        let info = self.persist(&merged)?;
        let retired: Vec<String> =
            self.meta.segments.iter().filter(|s| ids.contains(&s.id)).map(|s| s.file.clone()).collect();
        self.meta.segments.retain(|s| !ids.contains(&s.id));
        self.meta.segments.push(info.clone());
        self.published.retain(|s| !ids.contains(&s.id));
        self.published.push(Arc::new(merged));
        self.write_meta()?;
        // Readers holding old snapshots keep their segments in memory.
        for file in retired {
            let path = self.dir.join(file);
            fs::remove_file(&path).map_err(|e| IndexError::io(&path, e))?;
        }
        Ok(info)
    }

    /// Snapshot of what has been refreshed so far.
    pub fn reader(&self) -> IndexReader {
        self.reader.clone()
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.meta.segments
    }

    pub fn pending_rows(&self) -> usize {
        self.buffer.rows()
    }

    /// Refreshes, then releases the lock. Later calls fail with
    /// [`IndexError::Closed`].
    pub fn close(&mut self) -> Result<(), IndexError> {
        self.check_open()?;
        self.refresh()?;
        self.release();
        Ok(())
    }

    fn release(&mut self) {
        if self.locked {
            let _ = fs::remove_file(self.dir.join(LOCK_FILE));
            self.locked = false;
        }
    }
}

impl Drop for IndexWriter {
    fn drop(&mut self) {
        self.release();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{AnchorsPayload, FulltextPayload, Payload, RecordKey};
    use crate::index::{CountMode, Field, QueryKey};
    use crate::time::{DateRange, Granularity};
    use crate::wikitext::AnchorLink;
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    fn anchors(page: u64, rev: u64, ts: &str, links: &[(&str, &str)]) -> EmittedRecord {
        EmittedRecord {
            key: RecordKey { page_id: page, rev_id: rev },
            title: format!("P{page}"),
            ns: 0,
            timestamp: ts.parse().unwrap(),
            kind: RecordKind::Anchors,
            deleted: false,
            payload: Payload::Anchors(AnchorsPayload {
                links: links
                    .iter()
                    .enumerate()
                    .map(|(i, (t, a))| AnchorLink {
                        source_page_id: page,
                        target_title: t.to_string(),
                        anchor_text: a.to_string(),
                        position: i as u32,
                    })
                    .collect(),
            }),
            attributes: BTreeMap::new(),
        }
    }

    fn fulltext(page: u64, rev: u64, ts: &str, words: &[&str]) -> EmittedRecord {
        EmittedRecord {
            key: RecordKey { page_id: page, rev_id: rev },
            title: format!("P{page}"),
            ns: 0,
            timestamp: ts.parse().unwrap(),
            kind: RecordKind::Fulltext,
            deleted: false,
            payload: Payload::Fulltext(FulltextPayload::from_tokens(words.iter().map(|w| w.to_string()))),
            attributes: BTreeMap::new(),
        }
    }

    fn range() -> DateRange {
        DateRange::new(NaiveDate::from_ymd_opt(2012, 1, 2).unwrap(), NaiveDate::from_ymd_opt(2012, 2, 6).unwrap())
    }

    fn total(reader: &IndexReader, term: &str) -> u64 {
        reader.timeline(&QueryKey::term(term), Field::Anchor, Granularity::Week, range(), CountMode::Count).unwrap().total()
    }

    #[test]
    fn records_become_visible_at_refresh() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        w.index_record(&anchors(1, 10, "2012-01-03T00:00:00Z", &[("Obama", "President Obama")])).unwrap();
        assert_eq!(total(&w.reader(), "obama"), 0);
        w.seal_segment().unwrap();
        assert_eq!(total(&w.reader(), "obama"), 0, "sealed but unrefreshed");
        w.refresh().unwrap();
        assert_eq!(total(&w.reader(), "obama"), 1);
        assert_eq!(total(&w.reader(), "president"), 1);
    }

    #[test]
    fn reindexing_is_a_no_op() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        let r = anchors(1, 10, "2012-01-03T00:00:00Z", &[("Obama", "obama")]);
        assert!(!w.index_record(&r).unwrap().duplicate);
        w.refresh().unwrap();
        assert!(w.index_record(&r).unwrap().duplicate);
        w.close().unwrap();
        let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        assert!(w.index_record(&r).unwrap().duplicate, "keys survive reopen");
        w.close().unwrap();
        assert_eq!(total(&IndexReader::open(dir.path()).unwrap(), "obama"), 1);
    }

    #[test]
    fn second_writer_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        assert!(matches!(IndexWriter::open(dir.path(), IndexOptions::default()), Err(IndexError::Locked(_))));
        w.close().unwrap();
        assert!(matches!(w.index_record(&fulltext(1, 1, "2012-01-03T00:00:00Z", &["a"])), Err(IndexError::Closed)));
        IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
    }

    #[test]
    fn drop_without_close_discards_unrefreshed() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
            w.index_record(&fulltext(1, 1, "2012-01-03T00:00:00Z", &["kept"])).unwrap();
            w.refresh().unwrap();
            w.index_record(&fulltext(1, 2, "2012-01-04T00:00:00Z", &["lost"])).unwrap();
            w.seal_segment().unwrap();
        }
        let w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        let r = w.reader();
        let tl = |t: &str| r.timeline(&QueryKey::term(t), Field::Fulltext, Granularity::Day, range(), CountMode::Count).unwrap().total();
        assert_eq!((tl("kept"), tl("lost")), (1, 0));
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(files.iter().filter(|f| f.to_string_lossy().starts_with("seg-")).count(), 1, "orphan removed: {files:?}");
    }

    #[test]
    fn merge_policy_keeps_results() {
        let dir = tempfile::tempdir().unwrap();
        let opts = IndexOptions { auto_merge: false, ..IndexOptions::default() };
        let mut w = IndexWriter::open(dir.path(), opts).unwrap();
        for i in 0..8u64 {
            let day = format!("2012-01-{:02}T00:00:00Z", 3 + i);
            w.index_record(&anchors(1 + i % 3, 100 + i, &day, &[("Euro", "euro"), ("Olympic", "olympic games")])).unwrap();
            w.refresh().unwrap();
        }
        assert_eq!(w.segments().len(), 8);
        let before = w.reader();
        let ids: Vec<u64> = w.segments().iter().map(|s| s.id).collect();
        w.merge_segments(&ids).unwrap();
        assert_eq!(w.segments().len(), 1);
        for term in ["euro", "olympic", "games"] {
            assert_eq!(total(&before, term), total(&w.reader(), term));
        }
        assert_eq!(total(&before, "euro"), 8, "old snapshot unaffected");
        w.close().unwrap();
        assert_eq!(total(&IndexReader::open(dir.path()).unwrap(), "games"), 8);
    }

    #[test]
    fn auto_merge_bounds_segment_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        for i in 0..40u64 {
            w.index_record(&fulltext(1, 1 + i, "2012-01-03T00:00:00Z", &["x"])).unwrap();
            w.refresh().unwrap();
            assert!(w.segments().len() < 4 * MERGE_FACTOR, "{}", w.segments().len());
        }
        let r = w.reader();
        assert_eq!(
            r.timeline(&QueryKey::term("x"), Field::Fulltext, Granularity::Day, range(), CountMode::Count).unwrap().total(),
            40
        );
    }

    #[test]
    fn corrupt_segment_is_detected_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        w.index_record(&fulltext(1, 1, "2012-01-03T00:00:00Z", &["a", "b"])).unwrap();
        w.refresh().unwrap();
        let seg = dir.path().join(&w.segments()[0].file);
        w.close().unwrap();
        let mut bytes = fs::read(&seg).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&seg, bytes).unwrap();
        assert!(matches!(IndexReader::open(dir.path()), Err(IndexError::Corrupt { .. })));
    }

    #[test]
    fn metadata_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = IndexWriter::open(dir.path(), IndexOptions::default()).unwrap();
        let mut r = fulltext(1, 1, "2012-01-03T00:00:00Z", &["a"]);
        r.kind = RecordKind::Metadata;
        r.payload = Payload::Metadata(crate::extract::MetadataPayload {
            parent_id: None,
            contributor: None,
            comment: None,
            text_bytes: 0,
            redirect: None,
        });
        assert!(matches!(w.index_record(&r), Err(IndexError::UnsupportedKind(_))));
    }
}
