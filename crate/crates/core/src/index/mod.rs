//! Embedded incremental temporal inverted index.
//!
//! Records are turned into postings `(field, term, entity, timestamp)` with a
//! raw-posting count and a frequency. Postings accumulate in a writer
//! buffer, are sealed into immutable checksummed segment files, and become
//! visible to readers at `refresh`. Readers hold an immutable snapshot of the
//! segment list, so merges and reloads never disturb in-flight queries.
//!
//! Posting derivation:
//! * anchors: each link contributes one raw posting per token of its anchor
//!   text, with the link target's entity key as entity;
//! * fulltext: one raw posting per distinct term, frequency = term count,
//!   entity = the page's own entity key;
//! * deleted records contribute nothing; other kinds are rejected.

mod reader;
mod segment;
mod writer;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::extract::{EmittedRecord, Payload, RecordKind};
use crate::text::{entity_key, for_each_token};
use crate::ErrorClass;

pub use reader::{
    Bucket, CoOccurrence, CountMode, EntityHit, IndexReader, IndexStats, QueryError, QueryKey, TermRanking,
    TermScore, TermSelector, TimelineHistogram,
};
pub use segment::{DocKey, PostingBuffer, Row, Segment, SEGMENT_VERSION};
pub use writer::{
    IndexMeta, IndexOptions, IndexWriter, SegmentInfo, IndexAck, FORMAT_VERSION, MERGE_FACTOR, META_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Field {
    Anchor = 0,
    Fulltext = 1,
}

impl Field {
    pub fn from_u8(v: u8) -> Option<Field> {
        match v {
            0 => Some(Field::Anchor),
            1 => Some(Field::Fulltext),
            _ => None,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Anchor => "anchor",
            Field::Fulltext => "fulltext",
        })
    }
}

impl FromStr for Field {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, QueryError> {
        match s {
            "anchor" | "anchors" => Ok(Field::Anchor),
            "fulltext" => Ok(Field::Fulltext),
            other => Err(QueryError::UnknownField(other.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("index is closed")]
    Closed,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt index file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("corrupt payload for record {page_id}/{rev_id}: {message}")]
    CorruptPayload { page_id: u64, rev_id: u64, message: String },
    #[error("records of kind {0} are not indexed (expected anchors or fulltext)")]
    UnsupportedKind(RecordKind),
    #[error("unknown segment {0}")]
    UnknownSegment(u64),
    #[error("index at {path} is incompatible: {message}")]
    Incompatible { path: PathBuf, message: String },
    #[error("index at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("no index at {0}")]
    Missing(PathBuf),
}

impl IndexError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IndexError::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            IndexError::Io { .. } | IndexError::Locked(_) => ErrorClass::Io,
            IndexError::UnknownSegment(_) | IndexError::Missing(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

/// One posting of one record, before aggregation across records.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordPosting {
    pub field: Field,
    pub term: String,
    pub entity: String,
    pub count: u32,
    pub frequency: u64,
}

/// Postings of one record, folded per (field, term, entity) and sorted.
pub fn record_postings(record: &EmittedRecord) -> Result<Vec<RecordPosting>, IndexError> {
    record.validate().map_err(|message| IndexError::CorruptPayload {
        page_id: record.key.page_id,
        rev_id: record.key.rev_id,
        message,
    })?;
    let mut acc: HashMap<(Field, String, String), (u32, u64)> = HashMap::new();
    match &record.payload {
        _ if record.deleted => {}
        Payload::Anchors(a) => {
            for link in &a.links {
                let entity = entity_key(&link.target_title);
                if entity.is_empty() {
                    continue;
                }
                for_each_token(&link.anchor_text, |t| {
                    let slot = acc.entry((Field::Anchor, t.to_string(), entity.clone())).or_default();
                    slot.0 += 1;
                    slot.1 += 1;
                });
            }
        }
        Payload::Fulltext(f) => {
            let entity = entity_key(&record.title);
            for (term, &freq) in &f.terms {
                if freq == 0 || term.is_empty() {
                    return Err(IndexError::CorruptPayload {
                        page_id: record.key.page_id,
                        rev_id: record.key.rev_id,
                        message: format!("term {term:?} with frequency {freq}"),
                    });
                }
                acc.insert((Field::Fulltext, term.clone(), entity.clone()), (1, u64::from(freq)));
            }
        }
        Payload::Metadata(_) | Payload::Delta(_) => return Err(IndexError::UnsupportedKind(record.kind)),
    }
    let mut out: Vec<RecordPosting> = acc
        .into_iter()
        .map(|((field, term, entity), (count, frequency))| RecordPosting { field, term, entity, count, frequency })
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{AnchorsPayload, FulltextPayload, RecordKey};
    use crate::wikitext::AnchorLink;

    fn rec(kind: RecordKind, payload: Payload) -> EmittedRecord {
        EmittedRecord {
            key: RecordKey { page_id: 1, rev_id: 1 },
            title: "Some Page".into(),
            ns: 0,
            timestamp: "2012-11-06T00:00:00Z".parse().unwrap(),
            kind,
            deleted: false,
            payload,
            attributes: Default::default(),
        }
    }

    #[test]
    fn fulltext_counts_terms() {
        let r = rec(
            RecordKind::Fulltext,
            Payload::Fulltext(FulltextPayload::from_tokens(["a", "a", "b"].map(String::from))),
        );
        let p = record_postings(&r).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].term.as_str(), p[0].frequency, p[0].count), ("a", 2, 1));
        assert_eq!((p[1].term.as_str(), p[1].frequency), ("b", 1));
        assert!(p.iter().all(|x| x.entity == "some_page"));
    }

    #[test]
    fn anchors_post_per_anchor_term() {
        let link = |t: &str, a: &str, position| AnchorLink {
            source_page_id: 1,
            target_title: t.into(),
            anchor_text: a.into(),
            position,
        };
        let r = rec(
            RecordKind::Anchors,
            Payload::Anchors(AnchorsPayload { links: vec![link("Barack Obama", "obama", 0), link("Barack Obama", "President Obama", 1)] }),
        );
        let p = record_postings(&r).unwrap();
        let obama = p.iter().find(|x| x.term == "obama").unwrap();
        assert_eq!((obama.entity.as_str(), obama.count, obama.frequency), ("barack_obama", 2, 2));
        assert!(p.iter().any(|x| x.term == "president"));
    }

    #[test]
    fn deleted_and_unsupported() {
        let mut r = rec(RecordKind::Fulltext, Payload::Fulltext(FulltextPayload::from_tokens(["a".to_string()])));
        r.deleted = true;
        assert!(record_postings(&r).unwrap().is_empty());
        let mut bad = rec(RecordKind::Anchors, Payload::Fulltext(FulltextPayload::from_tokens([])));
        assert!(matches!(record_postings(&bad), Err(IndexError::CorruptPayload { .. })));
        bad.kind = RecordKind::Fulltext;
        assert!(record_postings(&bad).is_ok());
    }
}
