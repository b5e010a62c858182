//! Revision-history analytics over MediaWiki dumps.
//!
//! Data flows dump → [`partition`] → [`extract`] → [`index`]; the
//! [`pipeline`] module wires the stages behind one declarative file. Shared
//! types used by the service and CLI crates are re-exported at the root.

pub mod dump;
pub mod extract;
pub mod fixture;
pub mod hash;
pub mod index;
pub mod partition;
pub mod pipeline;
pub mod text;
pub mod wikitext;
pub mod time;

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Io,
}

impl ErrorClass {
    /// Process exit code: 1 usage, 2 data, 3 i/o.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Io => 3,
        }
    }
}

pub use dump::{open_dump, Compression, DumpError, DumpSource, PageHeader, RevisionRecord};
pub use extract::{EmittedRecord, OperatorChain, Payload, RecordKind};
pub use index::{
    Bucket, CoOccurrence, CountMode, EntityHit, Field, IndexError, IndexReader, IndexWriter, QueryError, QueryKey,
    TermRanking, TermSelector, TimelineHistogram,
};
pub use partition::{FilterSpec, PartitionMode, PartitionPlan};
pub use pipeline::{JobReport, PipelineConfig, Stage};
pub use time::{DateRange, Granularity, Timestamp};
