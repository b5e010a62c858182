//! Inputs shared by the benchmarks, built once per process.

use std::path::Path;

use revhist_core::dump::{open_dump, Compression, DumpSource, RevisionRecord};
use revhist_core::extract::{transform_records, EmittedRecord, OperatorChain};
use revhist_core::fixture::{fixture_bytes, FixtureConfig};
use revhist_core::index::{IndexOptions, IndexReader, IndexWriter};

pub fn fixture(pages: usize, revisions_per_page: usize, compression: Compression) -> Vec<u8> {
    fixture_bytes(&FixtureConfig { pages, revisions_per_page, seed: 1, compression, ..FixtureConfig::default() })
}

pub fn records(pages: usize, revisions_per_page: usize) -> Vec<RevisionRecord> {
    open_dump(DumpSource::memory(fixture(pages, revisions_per_page, Compression::None), Compression::None))
        .expect("fixture opens")
        .revisions()
        .collect::<Result<_, _>>()
        .expect("fixture parses")
}

pub fn emitted(records: &[RevisionRecord]) -> Vec<EmittedRecord> {
    let mut out = Vec::new();
    for kind in ["anchors", "fulltext"] {
        let chain = OperatorChain::parse(&format!("project:{kind}"), 0).expect("chain parses");
        out.extend(transform_records(records.to_vec(), &chain));
    }
    out
}

pub fn build_index(dir: &Path, records: &[EmittedRecord]) -> IndexReader {
    let mut w = IndexWriter::open(dir, IndexOptions::default()).expect("index opens");
    for r in records {
        w.index_record(r).expect("record indexes");
    }
    w.close().expect("index closes");
    IndexReader::open(dir).expect("index reopens")
}
