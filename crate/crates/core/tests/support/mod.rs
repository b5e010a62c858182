//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls the code under test except the two normalization
//! definitions (`tokenize`, `entity_key`), which are part of the index
//! contract rather than of its implementation.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, Duration, NaiveDate};
use revhist_core::dump::{PageHeader, RevisionRecord};
use revhist_core::extract::{EmittedRecord, Payload};
use revhist_core::index::{CountMode, Field, QueryKey, TermSelector};
use revhist_core::text::{entity_key, tokenize};
use revhist_core::time::Granularity;

/// Parses a whole dump with a DOM parser.
pub fn dom_parse(xml: &str) -> Vec<RevisionRecord> {
    let doc = roxmltree::Document::parse(xml).expect("oracle parses fixture");
    let child_text = |n: roxmltree::Node, name: &str| {
        n.children().find(|c| c.has_tag_name(name)).map(|c| c.text().unwrap_or("").to_string())
    };
    let mut out = Vec::new();
    for page in doc.root_element().children().filter(|n| n.has_tag_name("page")) {
        let header = PageHeader {
            page_id: child_text(page, "id").unwrap().parse().unwrap(),
            title: child_text(page, "title").unwrap(),
            namespace: child_text(page, "ns").map_or(0, |s| s.parse().unwrap()),
            redirect_target: page
                .children()
                .find(|c| c.has_tag_name("redirect"))
                .and_then(|r| r.attribute("title"))
                .map(str::to_string),
        };
        for rev in page.children().filter(|n| n.has_tag_name("revision")) {
            let contributor = rev.children().find(|c| c.has_tag_name("contributor")).and_then(|c| {
                c.children()
                    .find(|x| x.has_tag_name("username") || x.has_tag_name("ip"))
                    .map(|x| x.text().unwrap_or("").to_string())
            });
            let text_node = rev.children().find(|c| c.has_tag_name("text")).unwrap();
            let deleted = text_node.attribute("deleted").is_some();
            out.push(RevisionRecord {
                page: header.clone(),
                revision_id: child_text(rev, "id").unwrap().parse().unwrap(),
                parent_id: child_text(rev, "parentid").map(|s| s.parse().unwrap()),
                timestamp: child_text(rev, "timestamp").unwrap().parse().unwrap(),
                contributor,
                comment: child_text(rev, "comment"),
                text: if deleted { String::new() } else { text_node.text().unwrap_or("").to_string() },
                deleted,
            });
        }
    }
    out
}

/// One raw posting, weight 1 in count mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPosting {
    pub field: Field,
    pub term: String,
    pub entity: String,
    pub day: NaiveDate,
    pub ts: i64,
    pub freq: u64,
}

/// Postings of a set of emitted records, derived from the payloads.
pub fn raw_postings(records: &[EmittedRecord]) -> Vec<RawPosting> {
    let mut out = Vec::new();
    for r in records {
        if r.deleted {
            continue;
        }
        let ts = r.timestamp.unix();
        let day = r.timestamp.date();
        match &r.payload {
            Payload::Anchors(a) => {
                for link in &a.links {
                    let entity = entity_key(&link.target_title);
                    for tok in tokenize(&link.anchor_text) {
                        out.push(RawPosting { field: Field::Anchor, term: tok, entity: entity.clone(), day, ts, freq: 1 });
                    }
                }
            }
            Payload::Fulltext(f) => {
                let entity = entity_key(&r.title);
                for (term, n) in &f.terms {
                    out.push(RawPosting {
                        field: Field::Fulltext,
                        term: term.clone(),
                        entity: entity.clone(),
                        day,
                        ts,
                        freq: u64::from(*n),
                    });
                }
            }
            _ => panic!("oracle only handles anchors and fulltext"),
        }
    }
    out
}

/// Monday of the ISO week containing `d`.
pub fn iso_monday(d: NaiveDate) -> NaiveDate {
    d - Duration::days(i64::from(d.weekday().num_days_from_monday()))
}

fn bucket_of(g: Granularity, d: NaiveDate) -> NaiveDate {
    match g {
        Granularity::Day => d,
        Granularity::Week => iso_monday(d),
    }
}

fn step(g: Granularity) -> Duration {
    match g {
        Granularity::Day => Duration::days(1),
        Granularity::Week => Duration::weeks(1),
    }
}

fn key_matches(p: &RawPosting, key: &QueryKey) -> bool {
    match key {
        QueryKey::Term(t) => &p.term == t,
        QueryKey::Entity(e) => &p.entity == e,
    }
}

fn weight(p: &RawPosting, mode: CountMode) -> u64 {
    match mode {
        CountMode::Count => 1,
        CountMode::Frequency => p.freq,
    }
}

/// Zero-filled bucket series by linear scan.
pub fn oracle_timeline(
    postings: &[RawPosting],
    key: &QueryKey,
    field: Field,
    g: Granularity,
    from: NaiveDate,
    to: NaiveDate,
    mode: CountMode,
) -> Vec<(NaiveDate, u64)> {
    let mut buckets: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    let mut b = bucket_of(g, from);
    while b < to {
        buckets.insert(b, 0);
        b += step(g);
    }
    for p in postings {
        if p.field == field && key_matches(p, key) && p.day >= from && p.day < to {
            *buckets.get_mut(&bucket_of(g, p.day)).unwrap() += weight(p, mode);
        }
    }
    buckets.into_iter().collect()
}

pub fn oracle_top_terms(
    postings: &[RawPosting],
    selector: &TermSelector,
    field: Field,
    from: NaiveDate,
    to: NaiveDate,
    k: usize,
) -> Vec<(String, u64)> {
    let mut scores: HashMap<&str, u64> = HashMap::new();
    for p in postings {
        let selected = match selector {
            TermSelector::Entity(e) => &p.entity == e,
            TermSelector::Term(t) => &p.term == t,
            TermSelector::Prefix(x) => p.term.starts_with(x.as_str()),
            TermSelector::All => true,
        };
        if selected && p.field == field && p.day >= from && p.day < to {
            *scores.entry(&p.term).or_default() += p.freq;
        }
    }
    let mut v: Vec<(String, u64)> = scores.into_iter().map(|(t, s)| (t.to_string(), s)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

pub fn oracle_entity_search(postings: &[RawPosting], prefix: &str, field: Option<Field>, limit: usize) -> Vec<(String, u64)> {
    let prefix = entity_key(prefix);
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for p in postings {
        if p.entity.starts_with(&prefix) && field.is_none_or(|f| f == p.field) {
            *counts.entry(&p.entity).or_default() += 1;
        }
    }
    let mut v: Vec<(String, u64)> = counts.into_iter().map(|(e, c)| (e.to_string(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(limit);
    v
}

/// Terms and entities that occur in the postings, most frequent first,
/// plus a few that do not occur at all.
pub fn probe_keys(postings: &[RawPosting], per_kind: usize) -> Vec<QueryKey> {
    let mut terms: HashMap<&str, u64> = HashMap::new();
    let mut entities: HashMap<&str, u64> = HashMap::new();
    for p in postings {
        *terms.entry(&p.term).or_default() += 1;
        *entities.entry(&p.entity).or_default() += 1;
    }
    let top = |m: HashMap<&str, u64>| {
        let mut v: Vec<(&str, u64)> = m.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        // Frequent keys and a tail sample.
        let n = v.len();
        let mut picked: Vec<String> = v.iter().take(per_kind).map(|(k, _)| k.to_string()).collect();
        picked.extend(v.iter().skip(per_kind).step_by((n / per_kind.max(1)).max(1)).take(per_kind).map(|(k, _)| k.to_string()));
        picked
    };
    let mut keys: Vec<QueryKey> = top(terms).into_iter().map(QueryKey::Term).collect();
    keys.extend(top(entities).into_iter().map(QueryKey::Entity));
    keys.push(QueryKey::Term("zzz-absent".into()));
    keys.push(QueryKey::Entity("no_such_entity".into()));
    keys
}

/// Index query answers for a fixed battery of queries, in a comparable
/// form. Used to compare index states built by different schedules.
pub fn query_sweep(
    reader: &revhist_core::index::IndexReader,
    keys: &[QueryKey],
    from: NaiveDate,
    to: NaiveDate,
) -> Vec<String> {
    use revhist_core::time::DateRange;
    let range = DateRange::new(from, to);
    let mut out = Vec::new();
    for field in [Field::Anchor, Field::Fulltext] {
        for key in keys {
            for g in [Granularity::Day, Granularity::Week] {
                for mode in [CountMode::Count, CountMode::Frequency] {
                    let h = reader.timeline(key, field, g, range, mode).unwrap();
                    out.push(serde_json::to_string(&h).unwrap());
                }
            }
            let sel = match key {
                QueryKey::Term(t) => TermSelector::Term(t.clone()),
                QueryKey::Entity(e) => TermSelector::Entity(e.clone()),
            };
            out.push(serde_json::to_string(&reader.top_terms(&sel, field, range, 10).unwrap()).unwrap());
        }
        out.push(serde_json::to_string(&reader.top_terms(&TermSelector::All, field, range, 25).unwrap()).unwrap());
        out.push(serde_json::to_string(&reader.entity_search("", Some(field), 50)).unwrap());
        if keys.len() >= 2 {
            let c = reader.co_occurrence(&keys[0], &keys[1], field, Granularity::Week, range, CountMode::Count).unwrap();
            out.push(serde_json::to_string(&c).unwrap());
        }
    }
    out
}
