use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;
use crate::wikitext::AnchorLink;

use super::diff::RevisionDelta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Metadata,
    Fulltext,
    Anchors,
    Delta,
}

impl RecordKind {
    pub const ALL: [RecordKind; 4] = [RecordKind::Metadata, RecordKind::Fulltext, RecordKind::Anchors, RecordKind::Delta];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Metadata => "metadata",
            RecordKind::Fulltext => "fulltext",
            RecordKind::Anchors => "anchors",
            RecordKind::Delta => "delta",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown record kind {0:?} (expected metadata, fulltext, anchors or delta)")]
pub struct UnknownKind(pub String);

impl FromStr for RecordKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, UnknownKind> {
        RecordKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// Identity of the revision a record was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub page_id: u64,
    pub rev_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataPayload {
    pub parent_id: Option<u64>,
    pub contributor: Option<String>,
    pub comment: Option<String>,
    pub text_bytes: u64,
    pub redirect: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FulltextPayload {
    pub token_count: u64,
    /// Term frequencies; sums to `token_count`.
    pub terms: BTreeMap<String, u32>,
}

impl FulltextPayload {
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut terms: BTreeMap<String, u32> = BTreeMap::new();
        let mut token_count = 0;
        for t in tokens {
            token_count += 1;
            *terms.entry(t).or_default() += 1;
        }
        FulltextPayload { token_count, terms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorsPayload {
    pub links: Vec<AnchorLink>,
}

/// Kind-specific value; serialized as `{"<kind>": {...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Metadata(MetadataPayload),
    Fulltext(FulltextPayload),
    Anchors(AnchorsPayload),
    Delta(RevisionDelta),
}

impl Payload {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::Metadata(_) => RecordKind::Metadata,
            Payload::Fulltext(_) => RecordKind::Fulltext,
            Payload::Anchors(_) => RecordKind::Anchors,
            Payload::Delta(_) => RecordKind::Delta,
        }
    }
}

/// The (key, value) pair produced for one revision by an operator chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedRecord {
    pub key: RecordKey,
    pub title: String,
    pub ns: i32,
    pub timestamp: Timestamp,
    pub kind: RecordKind,
    pub deleted: bool,
    pub payload: Payload,
    /// Free-form per-record attributes (e.g. `kb_id`). Stored, never indexed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl EmittedRecord {
    /// `kind` must agree with the payload tag.
    pub fn validate(&self) -> Result<(), String> {
        if self.payload.kind() != self.kind {
            return Err(format!("kind {} carries a {} payload", self.kind, self.payload.kind()));
        }
        if self.key.rev_id == 0 || self.key.page_id == 0 {
            return Err("record key ids must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_form_is_kind_tagged() {
        let rec = EmittedRecord {
            key: RecordKey { page_id: 10, rev_id: 1000 },
            title: "A".into(),
            ns: 0,
            timestamp: "2012-11-06T00:00:00Z".parse().unwrap(),
            kind: RecordKind::Fulltext,
            deleted: false,
            payload: Payload::Fulltext(FulltextPayload::from_tokens(["a".into(), "a".into(), "b".into()])),
            attributes: BTreeMap::new(),
        };
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            json,
            r#"{"key":{"page_id":10,"rev_id":1000},"title":"A","ns":0,"timestamp":"2012-11-06T00:00:00Z","kind":"fulltext","deleted":false,"payload":{"fulltext":{"token_count":3,"terms":{"a":2,"b":1}}}}"#
        );
        let back: EmittedRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn mismatched_kind_is_invalid() {
        let json = r#"{"key":{"page_id":1,"rev_id":1},"title":"A","ns":0,"timestamp":"2012-11-06T00:00:00Z","kind":"anchors","deleted":false,"payload":{"fulltext":{"token_count":0,"terms":{}}}}"#;
        let rec: EmittedRecord = serde_json::from_str(json).unwrap();
        assert!(rec.validate().is_err());
    }
}
