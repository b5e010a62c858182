use std::collections::HashSet;

use proptest::prelude::*;
use revhist_core::dump::{open_dump, plan_splits, seek_page_boundary, ByteSpan, Compression, DumpSource};
use revhist_core::fixture::{fixture_bytes, FixtureConfig};

fn pages_in(bytes: &[u8], compression: Compression, span: Option<ByteSpan>) -> Vec<(u64, u64)> {
    let mut src = DumpSource::memory(bytes.to_vec(), compression);
    if let Some(s) = span {
        src = src.with_span(s);
    }
    open_dump(src)
        .unwrap()
        .revisions()
        .map(|r| {
            let r = r.unwrap();
            (r.page.page_id, r.revision_id)
        })
        .collect()
}

fn check_union(bytes: &[u8], compression: Compression, spans: &[ByteSpan]) {
    let whole = pages_in(bytes, compression, None);
    let mut seen = Vec::new();
    for s in spans {
        seen.extend(pages_in(bytes, compression, Some(*s)));
    }
    let unique: HashSet<_> = seen.iter().collect();
    assert_eq!(unique.len(), seen.len(), "duplicate revisions across spans");
    assert_eq!(seen, whole);
}

#[test]
fn planned_splits_cover_every_page_once() {
    for (seed, compression) in [(1, Compression::None), (2, Compression::Bzip2Multistream), (3, Compression::None)] {
        let cfg = FixtureConfig { pages: 40, revisions_per_page: 3, seed, compression, pages_per_stream: 4, ..FixtureConfig::default() };
        let bytes = fixture_bytes(&cfg);
        for n in 1..=12 {
            let spans = plan_splits(&DumpSource::memory(bytes.clone(), compression), n).unwrap();
            assert!(spans.len() <= n);
            check_union(&bytes, compression, &spans);
        }
    }
}

#[test]
fn unseekable_codecs_are_refused() {
    let cfg = FixtureConfig { compression: Compression::Gzip, ..FixtureConfig::default() };
    let src = DumpSource::memory(fixture_bytes(&cfg), Compression::Gzip);
    assert!(seek_page_boundary(&src, 10).is_err());
    assert!(plan_splits(&src, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn arbitrary_probe_offsets_give_complete_splits(
        seed in 1u64..1000,
        multistream in any::<bool>(),
        probes in proptest::collection::vec(0.0f64..1.0, 0..6),
    ) {
        let compression = if multistream { Compression::Bzip2Multistream } else { Compression::None };
        let cfg = FixtureConfig { pages: 12, revisions_per_page: 2, seed, compression, pages_per_stream: 2, ..FixtureConfig::default() };
        let bytes = fixture_bytes(&cfg);
        let src = DumpSource::memory(bytes.clone(), compression);
        let len = bytes.len() as u64;
        let mut bounds: Vec<u64> = probes
            .iter()
            .filter_map(|p| seek_page_boundary(&src, (p * len as f64) as u64).unwrap())
            .collect();
        bounds.push(seek_page_boundary(&src, 0).unwrap().unwrap());
        bounds.sort_unstable();
        bounds.dedup();
        let mut spans: Vec<ByteSpan> = bounds.windows(2).map(|w| ByteSpan { start: w[0], end: w[1] }).collect();
        spans.push(ByteSpan { start: *bounds.last().unwrap(), end: len });
        check_union(&bytes, compression, &spans);
    }
}
