//! Immutable segment files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        6  b"RHSEG\n"
//! version      u16
//! segment_id   u64
//! min_ts       i64     (i64::MAX when empty)
//! max_ts       i64     (i64::MIN when empty)
//! n_terms      u32, then n_terms   x (len u32, utf-8 bytes), sorted
//! n_entities   u32, then n_entities x (len u32, utf-8 bytes), sorted
//! n_rows       u64, then n_rows    x (field u8, term u32, entity u32, ts i64, count u32, freq u64)
//!                     sorted by (field, term, entity, ts), unique
//! n_keys       u64, then n_keys    x (kind u8, page_id u64, rev_id u64, attrs_len u32, attrs json)
//!                     sorted by (kind, page_id, rev_id)
//! crc32        u32     over every preceding byte
//! ```

use std::collections::HashMap;
use std::path::Path;

use super::{Field, IndexError};

const MAGIC: &[u8; 6] = b"RHSEG\n";
pub const SEGMENT_VERSION: u16 = 1;

/// One aggregated posting: all raw postings of `term` for `entity` at the
/// same instant and field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Row {
    pub field: u8,
    pub term: u32,
    pub entity: u32,
    pub ts: i64,
    /// Number of raw postings folded into this row.
    pub count: u32,
    /// Sum of their frequencies.
    pub freq: u64,
}

impl Row {
    fn sort_key(&self) -> (u8, u32, u32, i64) {
        (self.field, self.term, self.entity, self.ts)
    }
}

fn prune_dictionaries(terms: Vec<String>, entities: Vec<String>, mut rows: Vec<Row>) -> (Vec<String>, Vec<String>, Vec<Row>) {
    let mut used_t = vec![false; terms.len()];
    let mut used_e = vec![false; entities.len()];
    for r in &rows {
        used_t[r.term as usize] = true;
        used_e[r.entity as usize] = true;
    }
    if used_t.iter().all(|&u| u) && used_e.iter().all(|&u| u) {
        return (terms, entities, rows);
    }
    let compact = |names: Vec<String>, used: &[bool]| {
        let mut map = vec![u32::MAX; names.len()];
        let mut kept = Vec::new();
        for (i, n) in names.into_iter().enumerate() {
            if used[i] {
                map[i] = kept.len() as u32;
                kept.push(n);
            }
        }
        (kept, map)
    };
    let (terms, tm) = compact(terms, &used_t);
    let (entities, em) = compact(entities, &used_e);
    for r in &mut rows {
        r.term = tm[r.term as usize];
        r.entity = em[r.entity as usize];
    }
    (terms, entities, rows)
}

/// Identity of an indexed record, used for idempotent re-indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocKey {
    pub kind: u8,
    pub page_id: u64,
    pub rev_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub id: u64,
    pub terms: Vec<String>,
    pub entities: Vec<String>,
    pub rows: Vec<Row>,
    pub docs: Vec<(DocKey, String)>,
    pub min_ts: Option<i64>,
    pub max_ts: Option<i64>,
    /// Row indices ordered by (field, entity, ts).
    pub(crate) by_entity: Vec<u32>,
}

/// Accumulates postings with locally interned strings until sealed.
#[derive(Debug, Default)]
pub struct PostingBuffer {
    term_ids: HashMap<String, u32>,
    terms: Vec<String>,
    entity_ids: HashMap<String, u32>,
    entities: Vec<String>,
    rows: Vec<Row>,
    docs: Vec<(DocKey, String)>,
}

fn intern(ids: &mut HashMap<String, u32>, names: &mut Vec<String>, s: &str) -> u32 {
    if let Some(&id) = ids.get(s) {
        return id;
    }
    let id = names.len() as u32;
    ids.insert(s.to_string(), id);
    names.push(s.to_string());
    id
}

impl PostingBuffer {
    pub fn add(&mut self, field: Field, term: &str, entity: &str, ts: i64, count: u32, freq: u64) {
        let term = intern(&mut self.term_ids, &mut self.terms, term);
        let entity = intern(&mut self.entity_ids, &mut self.entities, entity);
        self.rows.push(Row { field: field as u8, term, entity, ts, count, freq });
    }

    pub fn add_doc(&mut self, key: DocKey, attributes: String) {
        self.docs.push((key, attributes));
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn docs(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.docs.is_empty()
    }

    /// Sorts dictionaries, folds duplicate (field, term, entity, ts) rows and
    /// produces an immutable segment.
    pub fn seal(self, id: u64) -> Segment {
        let (terms, term_map) = sorted_dictionary(self.terms);
        let (entities, entity_map) = sorted_dictionary(self.entities);
        let rows = self
            .rows
            .into_iter()
            .map(|r| Row { term: term_map[r.term as usize], entity: entity_map[r.entity as usize], ..r })
            .collect();
        Segment::assemble(id, terms, entities, rows, self.docs)
    }
}

/// Sorted copy of `names` and the old-id to new-id map.
fn sorted_dictionary(names: Vec<String>) -> (Vec<String>, Vec<u32>) {
    let mut order: Vec<u32> = (0..names.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| names[a as usize].cmp(&names[b as usize]));
    let mut map = vec![0u32; names.len()];
    for (new, &old) in order.iter().enumerate() {
        map[old as usize] = new as u32;
    }
    let mut slots: Vec<Option<String>> = names.into_iter().map(Some).collect();
    let sorted = order.iter().map(|&old| slots[old as usize].take().expect("each name once")).collect();
    (sorted, map)
}

impl Segment {
    pub fn doc_count(&self) -> u64 {
        self.docs.len() as u64
    }

    fn assemble(id: u64, terms: Vec<String>, entities: Vec<String>, mut rows: Vec<Row>, mut docs: Vec<(DocKey, String)>) -> Segment {
        rows.sort_unstable_by_key(Row::sort_key);
        let mut folded: Vec<Row> = Vec::with_capacity(rows.len());
        for r in rows {
            match folded.last_mut() {
                Some(last) if last.sort_key() == r.sort_key() => {
                    last.count += r.count;
                    last.freq += r.freq;
                }
                _ => folded.push(r),
            }
        }
        folded.shrink_to_fit();
        docs.sort_by_key(|d| d.0);
        docs.dedup_by_key(|d| d.0);
        // Dictionaries may hold strings whose rows were all folded away only
        // if callers add unused names; drop them to keep segments canonical.
        let (terms, entities, folded) = prune_dictionaries(terms, entities, folded);
        let mut seg = Segment { id, terms, entities, rows: folded, docs, min_ts: None, max_ts: None, by_entity: Vec::new() };
        seg.finish();
        seg
    }

    fn finish(&mut self) {
        self.min_ts = self.rows.iter().map(|r| r.ts).min();
        self.max_ts = self.rows.iter().map(|r| r.ts).max();
        let mut order: Vec<u32> = (0..self.rows.len() as u32).collect();
        order.sort_unstable_by_key(|&i| {
            let r = &self.rows[i as usize];
            (r.field, r.entity, r.ts, r.term)
        });
        self.by_entity = order;
    }

    /// Folds several segments into one; query results over the output equal
    /// those over the union of the inputs.
    pub fn merge(id: u64, inputs: &[&Segment]) -> Segment {
        let union = |pick: fn(&Segment) -> &Vec<String>| {
            let mut all: Vec<&str> = inputs.iter().flat_map(|s| pick(s).iter().map(String::as_str)).collect();
            all.sort_unstable();
            all.dedup();
            all.into_iter().map(str::to_string).collect::<Vec<String>>()
        };
        let terms = union(|s| &s.terms);
        let entities = union(|s| &s.entities);
        let remap = |local: &[String], global: &[String]| -> Vec<u32> {
            local.iter().map(|t| global.binary_search(t).expect("present in union") as u32).collect()
        };
        let mut rows = Vec::with_capacity(inputs.iter().map(|s| s.rows.len()).sum());
        let mut docs = Vec::new();
        for seg in inputs {
            let tm = remap(&seg.terms, &terms);
            let em = remap(&seg.entities, &entities);
            rows.extend(seg.rows.iter().map(|r| Row { term: tm[r.term as usize], entity: em[r.entity as usize], ..*r }));
            docs.extend(seg.docs.iter().cloned());
        }
        Segment::assemble(id, terms, entities, rows, docs)
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok().map(|i| i as u32)
    }

    pub fn entity_id(&self, entity: &str) -> Option<u32> {
        self.entities.binary_search_by(|e| e.as_str().cmp(entity)).ok().map(|i| i as u32)
    }

    /// Rows for one (field, term), ordered by (entity, ts).
    pub fn term_rows(&self, field: Field, term: u32) -> &[Row] {
        let f = field as u8;
        let lo = self.rows.partition_point(|r| (r.field, r.term) < (f, term));
        let hi = self.rows.partition_point(|r| (r.field, r.term) <= (f, term));
        &self.rows[lo..hi]
    }

    /// Rows for one (field, entity) with `ts` in `[from, to)`, in ts order.
    pub fn entity_rows(&self, field: Field, entity: u32, from: i64, to: i64) -> impl Iterator<Item = &Row> {
        let f = field as u8;
        let key = |i: &u32| {
            let r = &self.rows[*i as usize];
            (r.field, r.entity, r.ts)
        };
        let lo = self.by_entity.partition_point(|i| key(i) < (f, entity, from));
        let hi = self.by_entity.partition_point(|i| key(i) < (f, entity, to));
        self.by_entity[lo..hi].iter().map(|&i| &self.rows[i as usize])
    }

    pub fn field_rows(&self, field: Field) -> &[Row] {
        let f = field as u8;
        let lo = self.rows.partition_point(|r| r.field < f);
        let hi = self.rows.partition_point(|r| r.field <= f);
        &self.rows[lo..hi]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.rows.len() * 29);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SEGMENT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.id.to_le_bytes());
        out.extend_from_slice(&self.min_ts.unwrap_or(i64::MAX).to_le_bytes());
        out.extend_from_slice(&self.max_ts.unwrap_or(i64::MIN).to_le_bytes());
        for dict in [&self.terms, &self.entities] {
            out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
            for s in dict {
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        for r in &self.rows {
            out.push(r.field);
            out.extend_from_slice(&r.term.to_le_bytes());
            out.extend_from_slice(&r.entity.to_le_bytes());
            out.extend_from_slice(&r.ts.to_le_bytes());
            out.extend_from_slice(&r.count.to_le_bytes());
            out.extend_from_slice(&r.freq.to_le_bytes());
        }
        out.extend_from_slice(&(self.docs.len() as u64).to_le_bytes());
        for (k, attrs) in &self.docs {
            out.push(k.kind);
            out.extend_from_slice(&k.page_id.to_le_bytes());
            out.extend_from_slice(&k.rev_id.to_le_bytes());
            out.extend_from_slice(&(attrs.len() as u32).to_le_bytes());
            out.extend_from_slice(attrs.as_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses and verifies a segment image. Any checksum or structure
    /// problem is reported as corruption.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Segment, IndexError> {
        let corrupt = |why: &str| IndexError::Corrupt { path: path.to_path_buf(), message: why.to_string() };
        if bytes.len() < MAGIC.len() + 2 + 4 || &bytes[..6] != MAGIC {
            return Err(corrupt("not a segment file"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Cursor { buf: body, at: 6 };
        let version = r.u16().ok_or_else(|| corrupt("truncated header"))?;
        if version != SEGMENT_VERSION {
            return Err(corrupt(&format!("unsupported segment version {version}")));
        }
        let parse = |r: &mut Cursor<'_>| -> Option<Segment> {
            let id = r.u64()?;
            let _min = r.i64()?;
            let _max = r.i64()?;
            let mut dicts = Vec::with_capacity(2);
            for _ in 0..2 {
                let n = r.u32()? as usize;
                let mut dict = Vec::with_capacity(n.min(1 << 20));
                for _ in 0..n {
                    let len = r.u32()? as usize;
                    dict.push(String::from_utf8(r.take(len)?.to_vec()).ok()?);
                }
                dicts.push(dict);
            }
            let n_rows = r.u64()? as usize;
            let mut rows = Vec::with_capacity(n_rows.min(1 << 24));
            for _ in 0..n_rows {
                rows.push(Row { field: r.u8()?, term: r.u32()?, entity: r.u32()?, ts: r.i64()?, count: r.u32()?, freq: r.u64()? });
            }
            let n_docs = r.u64()? as usize;
            let mut docs = Vec::with_capacity(n_docs.min(1 << 24));
            for _ in 0..n_docs {
                let key = DocKey { kind: r.u8()?, page_id: r.u64()?, rev_id: r.u64()? };
                let len = r.u32()? as usize;
                docs.push((key, String::from_utf8(r.take(len)?.to_vec()).ok()?));
            }
            let entities = dicts.pop()?;
            let terms = dicts.pop()?;
            Some(Segment { id, terms, entities, rows, docs, min_ts: None, max_ts: None, by_entity: Vec::new() })
        };
        let mut seg = parse(&mut r).ok_or_else(|| corrupt("truncated segment"))?;
        if r.at != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        let nt = seg.terms.len() as u32;
        let ne = seg.entities.len() as u32;
        let sorted = seg.rows.windows(2).all(|w| w[0].sort_key() < w[1].sort_key())
            && seg.terms.windows(2).all(|w| w[0] < w[1])
            && seg.entities.windows(2).all(|w| w[0] < w[1]);
        let in_range = seg.rows.iter().all(|r| r.term < nt && r.entity < ne && r.count >= 1 && r.freq >= 1 && Field::from_u8(r.field).is_some());
        if !sorted || !in_range {
            return Err(corrupt("inconsistent posting table"));
        }
        seg.finish();
        Ok(seg)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let s = self.buf.get(self.at..end)?;
        self.at = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        Some(self.take(1)?[0])
    }

    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn i64(&mut self) -> Option<i64> {
        Some(i64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Segment {
        let mut p = PostingBuffer::default();
        p.add(Field::Anchor, "obama", "barack_obama", 100, 1, 1);
        p.add(Field::Fulltext, "a", "x", 50, 1, 3);
        p.add(Field::Anchor, "euro", "euro", 10, 1, 1);
        p.add(Field::Anchor, "obama", "barack_obama", 100, 1, 1);
        p.add_doc(DocKey { kind: 2, page_id: 1, rev_id: 2 }, String::new());
        p.seal(7)
    }

    #[test]
    fn duplicate_rows_fold() {
        let seg = sample();
        assert_eq!(seg.rows.len(), 3);
        let t = seg.term_id("obama").unwrap();
        let rows = seg.term_rows(Field::Anchor, t);
        assert_eq!((rows[0].count, rows[0].freq), (2, 2));
    }

    #[test]
    fn merge_equals_single_build() {
        let mut a = PostingBuffer::default();
        a.add(Field::Anchor, "x", "e", 1, 1, 1);
        a.add(Field::Anchor, "y", "f", 2, 1, 1);
        let mut b = PostingBuffer::default();
        b.add(Field::Anchor, "x", "e", 1, 1, 4);
        b.add(Field::Fulltext, "z", "e", 3, 1, 1);
        let mut all = PostingBuffer::default();
        all.add(Field::Anchor, "x", "e", 1, 1, 1);
        all.add(Field::Anchor, "y", "f", 2, 1, 1);
        all.add(Field::Anchor, "x", "e", 1, 1, 4);
        all.add(Field::Fulltext, "z", "e", 3, 1, 1);
        let merged = Segment::merge(9, &[&a.seal(1), &b.seal(2)]);
        assert_eq!(merged, all.seal(9));
    }

    #[test]
    fn encode_decode_round_trip() {
        let seg = sample();
        let back = Segment::decode(&seg.encode(), Path::new("x")).unwrap();
        assert_eq!(back, seg);
        assert_eq!(back.min_ts, Some(10));
        assert_eq!(back.max_ts, Some(100));
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let bytes = sample().encode();
        for i in 0..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x40;
            assert!(Segment::decode(&b, Path::new("x")).is_err(), "flip at {i} accepted");
        }
    }

    #[test]
    fn empty_segment() {
        let seg = PostingBuffer::default().seal(1);
        assert_eq!(seg.doc_count(), 0);
        assert_eq!(Segment::decode(&seg.encode(), Path::new("x")).unwrap(), seg);
    }
}
