use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::text::entity_key;
use crate::time::{date_from_day_number, DateRange, Granularity, Timestamp};

use super::segment::{Row, Segment};
use super::writer::{load_segment, IndexMeta};
use super::{Field, IndexError};

const SECS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("bad range: {start} is not before {end}")]
    BadRange { start: NaiveDate, end: NaiveDate },
    #[error("unknown field {0:?} (expected anchor or fulltext)")]
    UnknownField(String),
    #[error("bad parameter {name}: {message}")]
    BadParameter { name: &'static str, message: String },
}

impl QueryError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::BadRange { .. } => "bad-range",
            QueryError::UnknownField(_) => "unknown-field",
            QueryError::BadParameter { .. } => "bad-parameter",
        }
    }
}

/// What bucket counts add up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// Number of raw postings.
    #[default]
    Count,
    /// Sum of posting frequencies.
    Frequency,
}

impl std::str::FromStr for CountMode {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, QueryError> {
        match s {
            "count" => Ok(CountMode::Count),
            "frequency" | "freq" => Ok(CountMode::Frequency),
            other => Err(QueryError::BadParameter { name: "mode", message: format!("{other:?} (expected count or frequency)") }),
        }
    }
}

impl CountMode {
    fn weight(self, r: &Row) -> u64 {
        match self {
            CountMode::Count => u64::from(r.count),
            CountMode::Frequency => r.freq,
        }
    }
}

/// A timeline key: one term across all entities, or one entity across all
/// terms. Constructors normalize the way the index does.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "by", content = "key", rename_all = "lowercase")]
pub enum QueryKey {
    Term(String),
    Entity(String),
}

impl QueryKey {
    pub fn term(q: &str) -> Self {
        QueryKey::Term(q.trim().to_lowercase())
    }

    pub fn entity(q: &str) -> Self {
        QueryKey::Entity(entity_key(q))
    }

    pub fn as_str(&self) -> &str {
        match self {
            QueryKey::Term(s) | QueryKey::Entity(s) => s,
        }
    }
}

/// Which postings a top-terms ranking is computed over.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "by", content = "key", rename_all = "lowercase")]
pub enum TermSelector {
    /// Postings about one entity.
    Entity(String),
    /// Postings of exactly one term.
    Term(String),
    /// Postings of terms starting with a prefix.
    Prefix(String),
    All,
}

impl TermSelector {
    pub fn entity(q: &str) -> Self {
        TermSelector::Entity(entity_key(q))
    }

    pub fn term(q: &str) -> Self {
        TermSelector::Term(q.trim().to_lowercase())
    }

    pub fn prefix(q: &str) -> Self {
        TermSelector::Prefix(q.trim().to_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub start: NaiveDate,
    pub count: u64,
}

/// Zero-filled, contiguous bucket counts over `[start, end)`. Buckets are
/// aligned to the granularity; edge buckets only count in-range postings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineHistogram {
    pub query: QueryKey,
    pub field: Field,
    pub granularity: Granularity,
    pub mode: CountMode,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub buckets: Vec<Bucket>,
}

impl TimelineHistogram {
    pub fn total(&self) -> u64 {
        self.buckets.iter().map(|b| b.count).sum()
    }

    /// First bucket with the highest count, if any count is positive.
    pub fn argmax(&self) -> Option<NaiveDate> {
        let best = self.buckets.iter().map(|b| b.count).max().filter(|&m| m > 0)?;
        self.buckets.iter().find(|b| b.count == best).map(|b| b.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    pub score: u64,
}

/// Sorted by score descending, ties by term ascending; at most `k` entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRanking {
    pub query: TermSelector,
    pub field: Field,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub k: usize,
    pub entries: Vec<TermScore>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoOccurrence {
    pub a: TimelineHistogram,
    pub b: TimelineHistogram,
    /// `min(a, b)` per bucket.
    pub overlap: Vec<Bucket>,
}

impl CoOccurrence {
    pub fn overlap_argmax(&self) -> Option<NaiveDate> {
        let best = self.overlap.iter().map(|b| b.count).max().filter(|&m| m > 0)?;
        self.overlap.iter().find(|b| b.count == best).map(|b| b.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityHit {
    pub entity: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub segments: usize,
    pub doc_count: u64,
    pub postings: u64,
    pub min_timestamp: Option<Timestamp>,
    pub max_timestamp: Option<Timestamp>,
}

impl IndexStats {
    /// Calendar span covered by postings, as a half-open date range.
    pub fn date_span(&self) -> Option<DateRange> {
        let (lo, hi) = (self.min_timestamp?, self.max_timestamp?);
        Some(DateRange::new(lo.date(), date_from_day_number(hi.day() + 1)))
    }
}

/// Immutable snapshot of the published segments. Cheap to clone; all
/// queries on one snapshot see the same data.
#[derive(Debug, Clone)]
pub struct IndexReader {
    segments: Arc<Vec<Arc<Segment>>>,
}

struct Buckets {
    first_day: i64,
    width: i64,
    from_ts: i64,
    to_ts: i64,
    counts: Vec<u64>,
}

impl Buckets {
    fn new(range: DateRange, granularity: Granularity) -> Self {
        let first_day = granularity.bucket_start_day(range.start_day());
        let width = granularity.width_days();
        let n = (range.end_day() - first_day + width - 1) / width;
        Buckets {
            first_day,
            width,
            from_ts: range.start_day() * SECS_PER_DAY,
            to_ts: range.end_day() * SECS_PER_DAY,
            counts: vec![0; n.max(0) as usize],
        }
    }

    fn add(&mut self, ts: i64, w: u64) {
        if ts >= self.from_ts && ts < self.to_ts {
            let day = ts.div_euclid(SECS_PER_DAY);
            self.counts[((day - self.first_day) / self.width) as usize] += w;
        }
    }

    fn into_series(self) -> Vec<Bucket> {
        let (first, width) = (self.first_day, self.width);
        self.counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| Bucket { start: date_from_day_number(first + i as i64 * width), count })
            .collect()
    }
}

fn check_range(range: DateRange) -> Result<(), QueryError> {
    if range.start >= range.end {
        return Err(QueryError::BadRange { start: range.start, end: range.end });
    }
    Ok(())
}

impl IndexReader {
    pub(crate) fn empty() -> Self {
        IndexReader { segments: Arc::new(Vec::new()) }
    }

    pub(crate) fn from_segments(segments: Vec<Arc<Segment>>) -> Self {
        IndexReader { segments: Arc::new(segments) }
    }

    /// Opens the published state of an index directory without taking the
    /// writer lock and without writing anything.
    pub fn open(dir: &Path) -> Result<Self, IndexError> {
        let meta = IndexMeta::load(dir)?;
        let mut segments = Vec::with_capacity(meta.segments.len());
        for info in &meta.segments {
            segments.push(Arc::new(load_segment(dir, info)?));
        }
        Ok(IndexReader::from_segments(segments))
    }

    pub fn segments(&self) -> &[Arc<Segment>] {
        &self.segments
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            segments: self.segments.len(),
            doc_count: self.segments.iter().map(|s| s.doc_count()).sum(),
            postings: self.segments.iter().map(|s| s.rows.iter().map(|r| u64::from(r.count)).sum::<u64>()).sum(),
            min_timestamp: self.segments.iter().filter_map(|s| s.min_ts).min().map(Timestamp::from_unix),
            max_timestamp: self.segments.iter().filter_map(|s| s.max_ts).max().map(Timestamp::from_unix),
        }
    }

    fn fill(&self, key: &QueryKey, field: Field, mode: CountMode, buckets: &mut Buckets) {
        for seg in self.segments.iter() {
            match key {
                QueryKey::Term(t) => {
                    if let Some(id) = seg.term_id(t) {
                        for r in seg.term_rows(field, id) {
                            buckets.add(r.ts, mode.weight(r));
                        }
                    }
                }
                QueryKey::Entity(e) => {
                    if let Some(id) = seg.entity_id(e) {
                        for r in seg.entity_rows(field, id, buckets.from_ts, buckets.to_ts) {
                            buckets.add(r.ts, mode.weight(r));
                        }
                    }
                }
            }
        }
    }

    pub fn timeline(
        &self,
        key: &QueryKey,
        field: Field,
        granularity: Granularity,
        range: DateRange,
        mode: CountMode,
    ) -> Result<TimelineHistogram, QueryError> {
        check_range(range)?;
        let mut buckets = Buckets::new(range, granularity);
        self.fill(key, field, mode, &mut buckets);
        Ok(TimelineHistogram {
            query: key.clone(),
            field,
            granularity,
            mode,
            start: range.start,
            end: range.end,
            buckets: buckets.into_series(),
        })
    }

    /// The `k` highest-scoring terms (score = summed frequency) among the
    /// selected postings in `range`. An empty range gives an empty ranking.
    pub fn top_terms(&self, selector: &TermSelector, field: Field, range: DateRange, k: usize) -> Result<TermRanking, QueryError> {
        if range.start > range.end {
            return Err(QueryError::BadRange { start: range.start, end: range.end });
        }
        if k == 0 {
            return Err(QueryError::BadParameter { name: "k", message: "must be at least 1".into() });
        }
        let (from, to) = (range.start_day() * SECS_PER_DAY, range.end_day() * SECS_PER_DAY);
        let mut scores: HashMap<&str, u64> = HashMap::new();
        for seg in self.segments.iter() {
            let mut add = |r: &Row| {
                if r.ts >= from && r.ts < to {
                    *scores.entry(seg.terms[r.term as usize].as_str()).or_default() += r.freq;
                }
            };
            match selector {
                TermSelector::Entity(e) => {
                    if let Some(id) = seg.entity_id(e) {
                        seg.entity_rows(field, id, from, to).for_each(&mut add);
                    }
                }
                TermSelector::Term(t) => {
                    if let Some(id) = seg.term_id(t) {
                        seg.term_rows(field, id).iter().for_each(&mut add);
                    }
                }
                TermSelector::Prefix(p) => {
                    let lo = seg.terms.partition_point(|t| t.as_str() < p.as_str()) as u32;
                    let hi = lo + seg.terms[lo as usize..].iter().take_while(|t| t.starts_with(p.as_str())).count() as u32;
                    for id in lo..hi {
                        seg.term_rows(field, id).iter().for_each(&mut add);
                    }
                }
                TermSelector::All => seg.field_rows(field).iter().for_each(&mut add),
            }
        }
        let mut entries: Vec<TermScore> =
            scores.into_iter().filter(|(_, s)| *s > 0).map(|(t, score)| TermScore { term: t.to_string(), score }).collect();
        entries.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
        entries.truncate(k);
        Ok(TermRanking { query: selector.clone(), field, start: range.start, end: range.end, k, entries })
    }

    pub fn co_occurrence(
        &self,
        a: &QueryKey,
        b: &QueryKey,
        field: Field,
        granularity: Granularity,
        range: DateRange,
        mode: CountMode,
    ) -> Result<CoOccurrence, QueryError> {
        let ha = self.timeline(a, field, granularity, range, mode)?;
        let hb = self.timeline(b, field, granularity, range, mode)?;
        let overlap = ha
            .buckets
            .iter()
            .zip(&hb.buckets)
            .map(|(x, y)| Bucket { start: x.start, count: x.count.min(y.count) })
            .collect();
        Ok(CoOccurrence { a: ha, b: hb, overlap })
    }

    /// Entity keys starting with the case-folded `prefix`, with their raw
    /// posting counts (optionally in one field), most frequent first, ties
    /// by key.
    pub fn entity_search(&self, prefix: &str, field: Option<Field>, limit: usize) -> Vec<EntityHit> {
        let prefix = entity_key(prefix);
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for seg in self.segments.iter() {
            let lo = seg.entities.partition_point(|e| e.as_str() < prefix.as_str());
            let n = seg.entities[lo..].iter().take_while(|e| e.starts_with(prefix.as_str())).count();
            if n == 0 {
                continue;
            }
            let range = lo as u32..(lo + n) as u32;
            for r in &seg.rows {
                if range.contains(&r.entity) && field.is_none_or(|f| f as u8 == r.field) {
                    *counts.entry(seg.entities[r.entity as usize].as_str()).or_default() += u64::from(r.count);
                }
            }
        }
        let mut hits: Vec<EntityHit> =
            counts.into_iter().map(|(e, count)| EntityHit { entity: e.to_string(), count }).collect();
        hits.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.entity.cmp(&b.entity)));
        hits.truncate(limit);
        hits
    }

    /// Whether any posting (in `field`, if given) names the entity.
    pub fn has_entity(&self, key: &str, field: Option<Field>) -> bool {
        self.segments.iter().any(|seg| match seg.entity_id(key) {
            Some(id) => match field {
                Some(f) => seg.entity_rows(f, id, i64::MIN, i64::MAX).next().is_some(),
                None => true,
            },
            None => false,
        })
    }

    /// Whether any posting in `field` carries the term.
    pub fn has_term(&self, term: &str, field: Field) -> bool {
        self.segments.iter().any(|seg| seg.term_id(term).is_some_and(|id| !seg.term_rows(field, id).is_empty()))
    }

    /// Whether `key` names anything indexed in `field`.
    pub fn has_key(&self, key: &QueryKey, field: Field) -> bool {
        match key {
            QueryKey::Term(t) => self.has_term(t, field),
            QueryKey::Entity(e) => self.has_entity(e, Some(field)),
        }
    }
}
