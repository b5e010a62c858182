mod support;

use std::io::Write;

use revhist_core::dump::{open_dump, Compression, DumpError, DumpEvent, DumpSource, RevisionRecord};
use revhist_core::fixture::{fixture_bytes, FixtureConfig};

fn stream(bytes: Vec<u8>, compression: Compression) -> Vec<RevisionRecord> {
    open_dump(DumpSource::memory(bytes, compression)).unwrap().revisions().collect::<Result<_, _>>().unwrap()
}

fn config(seed: u64) -> FixtureConfig {
    FixtureConfig {
        pages: 5 + (seed as usize * 7) % 40,
        revisions_per_page: 1 + (seed as usize * 3) % 12,
        seed,
        ..FixtureConfig::default()
    }
}

#[test]
fn streaming_parse_matches_dom_oracle() {
    for seed in 1..=20 {
        let cfg = config(seed);
        let xml = fixture_bytes(&cfg);
        let oracle = support::dom_parse(std::str::from_utf8(&xml).unwrap());
        assert_eq!(oracle.len(), cfg.total_revisions());
        let parsed = stream(xml, Compression::None);
        assert_eq!(parsed, oracle, "seed {seed}");
    }
}

#[test]
fn every_compression_decodes_to_the_same_records() {
    let base = config(7);
    let oracle = support::dom_parse(std::str::from_utf8(&fixture_bytes(&base)).unwrap());
    for compression in [Compression::Gzip, Compression::Bzip2, Compression::Bzip2Multistream] {
        let cfg = FixtureConfig { compression, pages_per_stream: 3, ..base.clone() };
        assert_eq!(stream(fixture_bytes(&cfg), compression), oracle, "{compression:?}");
    }
}

#[test]
fn page_events_precede_their_revisions() {
    let xml = fixture_bytes(&config(3));
    let mut current = None;
    for ev in open_dump(DumpSource::memory(xml, Compression::None)).unwrap() {
        match ev.unwrap() {
            DumpEvent::Page(p) => current = Some(p),
            DumpEvent::Revision(r) => assert_eq!(Some(&r.page), current.as_ref()),
        }
    }
}

#[test]
fn truncated_dump_is_an_error() {
    let xml = fixture_bytes(&config(4));
    let cut = xml[..xml.len() * 2 / 3].to_vec();
    let results: Vec<_> = open_dump(DumpSource::memory(cut, Compression::None)).unwrap().collect();
    assert!(matches!(results.last(), Some(Err(DumpError::MalformedXml { .. }))), "{:?}", results.last());
}

#[test]
fn missing_revision_id_is_reported() {
    let xml = "<mediawiki><page><title>A</title><ns>0</ns><id>1</id><revision>\
               <timestamp>2012-01-01T00:00:00Z</timestamp><text>x</text></revision></page></mediawiki>";
    let err = open_dump(DumpSource::memory(xml.as_bytes().to_vec(), Compression::None))
        .unwrap()
        .revisions()
        .find_map(Result::err)
        .unwrap();
    assert!(matches!(err, DumpError::MissingField { field: "id", .. }), "{err}");
}

#[test]
fn bad_timestamp_is_reported() {
    let xml = "<mediawiki><page><title>A</title><ns>0</ns><id>1</id><revision><id>2</id>\
               <timestamp>yesterday</timestamp><text>x</text></revision></page></mediawiki>";
    let err = open_dump(DumpSource::memory(xml.as_bytes().to_vec(), Compression::None))
        .unwrap()
        .revisions()
        .find_map(Result::err)
        .unwrap();
    assert!(matches!(err, DumpError::BadTimestamp { .. }), "{err}");
}

#[test]
fn declared_codec_must_match() {
    let xml = fixture_bytes(&config(5));
    assert!(matches!(
        open_dump(DumpSource::memory(xml, Compression::Gzip)),
        Err(DumpError::CodecMismatch { .. })
    ));
}

#[test]
fn invalid_utf8_is_replaced() {
    let mut xml = Vec::new();
    write!(xml, "<mediawiki><page><title>A</title><ns>0</ns><id>1</id><revision><id>2</id>").unwrap();
    write!(xml, "<timestamp>2012-01-01T00:00:00Z</timestamp><text>caf").unwrap();
    xml.extend_from_slice(&[0xff, 0xfe]);
    write!(xml, "</text></revision></page></mediawiki>").unwrap();
    let recs = stream(xml, Compression::None);
    assert!(recs[0].text.starts_with("caf\u{fffd}"), "{:?}", recs[0].text);
}
