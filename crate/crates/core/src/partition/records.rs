//! On-disk forms of partition files and a reader that accepts both.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dump::{DumpError, DumpSource, PageHeader, RevisionRecord, RevisionStream};
use crate::time::Timestamp;

use super::{OutputFormat, PartitionError};

/// One json-lines partition row. Field names are frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonRevision {
    pub page_id: u64,
    pub title: String,
    pub ns: i32,
    pub redirect: Option<String>,
    pub rev_id: u64,
    pub parent_id: Option<u64>,
    pub timestamp: Timestamp,
    pub contributor: Option<String>,
    pub comment: Option<String>,
    pub text: String,
    pub deleted: bool,
}

impl From<&RevisionRecord> for JsonRevision {
    fn from(r: &RevisionRecord) -> Self {
        JsonRevision {
            page_id: r.page.page_id,
            title: r.page.title.clone(),
            ns: r.page.namespace,
            redirect: r.page.redirect_target.clone(),
            rev_id: r.revision_id,
            parent_id: r.parent_id,
            timestamp: r.timestamp,
            contributor: r.contributor.clone(),
            comment: r.comment.clone(),
            text: r.text.clone(),
            deleted: r.deleted,
        }
    }
}

impl From<JsonRevision> for RevisionRecord {
    fn from(j: JsonRevision) -> Self {
        RevisionRecord {
            page: PageHeader { page_id: j.page_id, title: j.title, namespace: j.ns, redirect_target: j.redirect },
            revision_id: j.rev_id,
            parent_id: j.parent_id,
            timestamp: j.timestamp,
            contributor: j.contributor,
            comment: j.comment,
            text: j.text,
            deleted: j.deleted,
        }
    }
}

/// Serializes without cloning the text.
#[derive(Serialize)]
pub(crate) struct JsonRevisionRef<'a> {
    page_id: u64,
    title: &'a str,
    ns: i32,
    redirect: Option<&'a str>,
    rev_id: u64,
    parent_id: Option<u64>,
    timestamp: Timestamp,
    contributor: Option<&'a str>,
    comment: Option<&'a str>,
    text: &'a str,
    deleted: bool,
}

impl<'a> From<&'a RevisionRecord> for JsonRevisionRef<'a> {
    fn from(r: &'a RevisionRecord) -> Self {
        JsonRevisionRef {
            page_id: r.page.page_id,
            title: &r.page.title,
            ns: r.page.namespace,
            redirect: r.page.redirect_target.as_deref(),
            rev_id: r.revision_id,
            parent_id: r.parent_id,
            timestamp: r.timestamp,
            contributor: r.contributor.as_deref(),
            comment: r.comment.as_deref(),
            text: &r.text,
            deleted: r.deleted,
        }
    }
}

/// Streams the revisions of one partition file.
pub enum PartitionReader {
    Json { lines: std::io::Lines<BufReader<File>>, line: u64 },
    Xml(Box<RevisionStream>),
}

impl PartitionReader {
    /// The format is taken from the extension: `.jsonl` or `.xml` (optionally
    /// compressed, for raw dumps).
    pub fn open(path: &Path) -> Result<Self, PartitionError> {
        match OutputFormat::from_path(path) {
            Some(OutputFormat::JsonLines) => {
                let file = File::open(path).map_err(|e| PartitionError::io(path, e))?;
                Ok(PartitionReader::Json { lines: BufReader::with_capacity(1 << 16, file).lines(), line: 0 })
            }
            _ => Ok(PartitionReader::Xml(Box::new(crate::dump::open_dump(DumpSource::path(path))?))),
        }
    }
}

impl Iterator for PartitionReader {
    type Item = Result<RevisionRecord, PartitionError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            PartitionReader::Json { lines, line } => loop {
                *line += 1;
                let text = match lines.next()? {
                    Ok(t) => t,
                    Err(e) => return Some(Err(PartitionError::Dump(DumpError::Io(e)))),
                };
                if text.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<JsonRevision>(&text)
                    .map_err(|e| PartitionError::BadRecord { line: *line, message: e.to_string() })
                    .and_then(|j| {
                        if j.page_id == 0 || j.rev_id == 0 || j.parent_id == Some(j.rev_id) {
                            Err(PartitionError::BadRecord { line: *line, message: "invalid id".into() })
                        } else {
                            Ok(RevisionRecord::from(j))
                        }
                    });
                return Some(parsed);
            },
            PartitionReader::Xml(stream) => loop {
                match stream.next()? {
                    Ok(crate::dump::DumpEvent::Revision(r)) => return Some(Ok(r)),
                    Ok(crate::dump::DumpEvent::Page(_)) => continue,
                    Err(e) => return Some(Err(e.into())),
                }
            },
        }
    }
}

/// Reads the whole file (tests and small partitions).
pub fn read_partition(path: &Path) -> Result<Vec<RevisionRecord>, PartitionError> {
    PartitionReader::open(path)?.collect()
}
