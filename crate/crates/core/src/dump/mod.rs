//! Streaming access to MediaWiki XML export dumps.
//!
//! [`open_dump`] yields a [`PageHeader`] event for every `<page>` followed by
//! that page's [`RevisionRecord`]s in dump order. Memory use is bounded by the
//! largest single revision, regardless of dump size. Plain, gzip and bzip2
//! inputs are supported; plain and bzip2-multistream inputs are also
//! seekable, which is what lets [`seek_page_boundary`] cut a dump into
//! independently parseable byte spans.

mod reader;
mod source;
mod utf8;
pub mod writer;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

pub use reader::{parse_revision, RevisionStream};
pub use source::{
    open_dump, plan_splits, seek_page_boundary, ByteSpan, Compression, DumpLocation, DumpSource,
};

/// The page-level fields shared by every revision of a page.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageHeader {
    pub page_id: u64,
    pub title: String,
    /// MediaWiki namespace number; 0 when the dump omits `<ns>`.
    pub namespace: i32,
    pub redirect_target: Option<String>,
}

/// One stored version of one page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevisionRecord {
    pub page: PageHeader,
    pub revision_id: u64,
    /// The preceding revision of the same page, when the dump records it.
    pub parent_id: Option<u64>,
    pub timestamp: Timestamp,
    /// Username or IP address.
    pub contributor: Option<String>,
    pub comment: Option<String>,
    pub text: String,
    /// Text was suppressed in the dump (`<text deleted="deleted"/>`).
    pub deleted: bool,
}

impl RevisionRecord {
    /// Encoded length of `text` in bytes.
    pub fn text_bytes(&self) -> usize {
        self.text.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DumpEvent {
    Page(PageHeader),
    Revision(RevisionRecord),
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("declared compression {declared} does not match the data (found {found})")]
    CodecMismatch { declared: Compression, found: &'static str },
    #[error("malformed xml at byte {offset}: {message}")]
    MalformedXml { offset: u64, message: String },
    #[error("revision near byte {offset} is missing required field <{field}>")]
    MissingField { field: &'static str, offset: u64 },
    #[error("bad timestamp {value:?} near byte {offset}")]
    BadTimestamp { value: String, offset: u64 },
    #[error("invalid value {value:?} for <{field}> near byte {offset}")]
    InvalidField { field: &'static str, value: String, offset: u64 },
    #[error("source is not seekable ({0})")]
    NotSeekable(&'static str),
}

impl DumpError {
    pub fn class(&self) -> crate::ErrorClass {
        match self {
            DumpError::Io(_) => crate::ErrorClass::Io,
            DumpError::NotSeekable(_) => crate::ErrorClass::Usage,
            _ => crate::ErrorClass::Data,
        }
    }
}
