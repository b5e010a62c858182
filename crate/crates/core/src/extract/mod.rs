//! The transformer layer: operator chains over partition files producing
//! kind-tagged (key, value) records.
//!
//! Filters and samples are pushed below payload construction. A revision
//! they reject is counted and discarded without being tokenized, diffed or
//! scanned for links.

mod chain;
mod diff;
mod record;
mod transform;

use std::path::{Path, PathBuf};

use crate::partition::PartitionError;
use crate::ErrorClass;

pub use chain::{ChainError, Operator, OperatorChain, Verdict};
pub use diff::{diff_revisions, diff_tokens, RevisionDelta, TokenDelta, LCS_MAX_TOKENS};
pub use record::{
    AnchorsPayload, EmittedRecord, FulltextPayload, MetadataPayload, Payload, RecordKey, RecordKind, UnknownKind,
};
pub use transform::{
    build_payload, extract_all, extract_partition, read_emitted, resolve_partitions, transform, transform_records,
    ExtractSummary, Transform, TransformStats,
};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: bad emitted record: {message}")]
    BadRecord { path: PathBuf, line: u64, message: String },
}

impl ExtractError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExtractError::Io { path: path.to_path_buf(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            ExtractError::Partition(e) => e.class(),
            ExtractError::Chain(ChainError::EntityList { source: crate::partition::EntitySetError::Io(_), .. }) => {
                ErrorClass::Io
            }
            ExtractError::Chain(_) => ErrorClass::Usage,
            ExtractError::Io { .. } => ErrorClass::Io,
            ExtractError::BadRecord { .. } => ErrorClass::Data,
        }
    }
}
