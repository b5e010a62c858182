//! Deterministic synthetic dumps.
//!
//! Two generators live here. [`FixtureConfig`] produces a revision history
//! with evolving wikitext (links, templates, file and category links, HTML,
//! non-ASCII words, deleted revisions), parameterised by size and seed.
//! [`SpikeScenario`] produces a corpus where chosen entities are linked far
//! more often during one known week, which is what the timeline and
//! co-occurrence analytics are meant to surface.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dump::writer::{DumpWriter, XmlWriteError};
use crate::dump::{Compression, PageHeader, RevisionRecord};
use crate::hash::splitmix64;
use crate::time::{day_number, Timestamp};

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ven", "tor", "sel", "dun", "bri", "on", "ex", "qua", "zu", "pel", "har", "nim",
];

const WORDS: &[&str] = &[
    "the", "of", "and", "in", "to", "was", "is", "for", "on", "as", "with", "by", "he", "she", "at", "from",
    "his", "her", "an", "were", "are", "which", "this", "also", "be", "had", "first", "one", "their", "its",
    "after", "new", "two", "who", "they", "has", "been", "other", "team", "season", "album", "city", "river",
    "school", "party", "election", "president", "minister", "government", "league", "club", "match", "final",
    "record", "world", "national", "university", "album", "film", "series", "station", "church", "war",
    "army", "battle", "company", "music", "band", "song", "village", "district", "county", "population",
    "census", "born", "died", "married", "award", "champion", "medal", "gold", "silver", "olympic", "games",
    "cup", "euro", "bank", "currency", "market", "treaty", "summit", "campaign", "vote", "senate", "court",
    "railway", "bridge", "airport", "museum", "novel", "author", "painter", "theatre", "opera", "festival",
    "café", "über", "naïve", "zürich", "são", "paulo", "東京", "москва", "ελλάδα", "2011", "2012", "2013",
    "1990s", "19th", "century", "north", "south", "east", "west", "early", "late", "life", "career",
    "history", "culture", "education", "sport", "economy", "geography", "climate", "transport", "media",
];

const TEMPLATES: &[&str] = &["Infobox person", "Infobox settlement", "Cite web", "Citation needed", "Reflist", "Convert"];

/// Size, time span and seed of a generated revision history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub pages: usize,
    pub revisions_per_page: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Revisions are spread over `[start_date, start_date + span_days)`.
    pub span_days: u32,
    pub words_per_revision: usize,
    pub compression: Compression,
    /// Pages per bzip2 stream when writing multistream output.
    pub pages_per_stream: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            pages: 10,
            revisions_per_page: 5,
            seed: 42,
            start_date: NaiveDate::from_ymd_opt(2011, 1, 1).expect("valid date"),
            span_days: 730,
            words_per_revision: 60,
            compression: Compression::None,
            pages_per_stream: 100,
        }
    }
}

impl FixtureConfig {
    pub fn page_id(index: usize) -> u64 {
        10 * (index as u64 + 1)
    }

    /// Title of the page at `index`; depends only on the index and seed.
    pub fn page_header(&self, index: usize) -> PageHeader {
        let h = splitmix64(self.seed ^ splitmix64(index as u64 + 1));
        let base = base_title(index);
        let (namespace, title) = match h % 100 {
            0..=74 => (0, base.clone()),
            75..=84 => (1, format!("Talk:{base}")),
            85..=92 => (14, format!("Category:{base}")),
            _ => (6, format!("File:{base}.png")),
        };
        let redirect_target = (namespace == 0 && (h >> 8) % 100 < 5 && self.pages > 1).then(|| {
            let target = ((h >> 16) as usize) % self.pages;
            let target = if target == index { (index + 1) % self.pages } else { target };
            base_title(target)
        });
        PageHeader { page_id: Self::page_id(index), title, namespace, redirect_target }
    }

    pub fn total_revisions(&self) -> usize {
        self.pages * self.revisions_per_page
    }

    /// The revision history, in dump order.
    pub fn records(&self) -> FixtureRecords<'_> {
        FixtureRecords {
            cfg: self,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            page_index: 0,
            rev_index: 0,
            next_revision_id: 1000,
            header: None,
            times: Vec::new(),
            pieces: Vec::new(),
            previous_id: None,
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Bijective syllable spelling of `n`, so titles are unique per index.
fn syllable_word(mut n: usize) -> String {
    let base = SYLLABLES.len();
    let mut out = String::new();
    loop {
        out.push_str(SYLLABLES[n % base]);
        n /= base;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    out
}

fn base_title(index: usize) -> String {
    let second = syllable_word(splitmix64(index as u64) as usize % 200);
    format!("{} {}", capitalize(&syllable_word(index + 17)), capitalize(&second))
}

#[derive(Debug, Clone)]
enum Piece {
    Word(&'static str, Option<char>),
    Link { target: usize, fragment: bool, anchor: Option<Vec<&'static str>> },
    Template { name: &'static str, args: Vec<(&'static str, &'static str)>, link: Option<usize>, nested: bool },
    FileLink(&'static str, Vec<&'static str>),
    Category(&'static str),
    Reference(Vec<&'static str>),
    Comment(&'static str),
    Bold(&'static str),
    Ampersand,
}

/// Iterator over the generated revisions of a [`FixtureConfig`].
pub struct FixtureRecords<'a> {
    cfg: &'a FixtureConfig,
    rng: ChaCha8Rng,
    page_index: usize,
    rev_index: usize,
    next_revision_id: u64,
    header: Option<PageHeader>,
    times: Vec<i64>,
    pieces: Vec<Piece>,
    previous_id: Option<u64>,
}

impl FixtureRecords<'_> {
    fn word(&mut self) -> &'static str {
        WORDS[self.rng.random_range(0..WORDS.len())]
    }

    fn words(&mut self, n: usize) -> Vec<&'static str> {
        (0..n).map(|_| self.word()).collect()
    }

    fn random_piece(&mut self) -> Piece {
        let pages = self.cfg.pages.max(1);
        match self.rng.random_range(0..100) {
            0..=79 => {
                let punct = match self.rng.random_range(0..12) {
                    0 => Some(','),
                    1 => Some('.'),
                    _ => None,
                };
                Piece::Word(self.word(), punct)
            }
            80..=88 => {
                let target = self.rng.random_range(0..pages);
                let fragment = self.rng.random_bool(0.15);
                let anchor = if self.rng.random_bool(0.5) {
                    let n = self.rng.random_range(1..3);
                    Some(self.words(n))
                } else {
                    None
                };
                Piece::Link { target, fragment, anchor }
            }
            89..=91 => {
                let name = TEMPLATES[self.rng.random_range(0..TEMPLATES.len())];
                let args = (0..self.rng.random_range(0..3)).map(|_| (self.word(), self.word())).collect();
                let link = self.rng.random_bool(0.3).then(|| self.rng.random_range(0..pages));
                let nested = self.rng.random_bool(0.2);
                Piece::Template { name, args, link, nested }
            }
            92 => {
                let name = self.word();
                let n = self.rng.random_range(1..4);
                Piece::FileLink(name, self.words(n))
            }
            93 => Piece::Category(self.word()),
            94..=95 => {
                let n = self.rng.random_range(2..5);
                Piece::Reference(self.words(n))
            }
            96 => Piece::Comment(self.word()),
            97..=98 => Piece::Bold(self.word()),
            _ => Piece::Ampersand,
        }
    }

    fn render(&self) -> String {
        let mut out = String::with_capacity(self.pieces.len() * 8);
        for (i, piece) in self.pieces.iter().enumerate() {
            if i > 0 {
                out.push(if i % 40 == 0 { '\n' } else { ' ' });
            }
            match piece {
                Piece::Word(w, p) => {
                    out.push_str(w);
                    if let Some(c) = p {
                        out.push(*c);
                    }
                }
                Piece::Link { target, fragment, anchor } => {
                    out.push_str("[[");
                    out.push_str(&base_title(*target));
                    if *fragment {
                        out.push_str("#History");
                    }
                    if let Some(a) = anchor {
                        out.push('|');
                        out.push_str(&a.join(" "));
                    }
                    out.push_str("]]");
                }
                Piece::Template { name, args, link, nested } => {
                    out.push_str("{{");
                    out.push_str(name);
                    for (k, v) in args {
                        out.push('|');
                        out.push_str(k);
                        out.push('=');
                        out.push_str(v);
                    }
                    if let Some(t) = link {
                        out.push_str("|see=[[");
                        out.push_str(&base_title(*t));
                        out.push_str("]]");
                    }
                    if *nested {
                        out.push_str("|date={{Date|2012}}");
                    }
                    out.push_str("}}");
                }
                Piece::FileLink(name, caption) => {
                    out.push_str("[[File:");
                    out.push_str(&capitalize(name));
                    out.push_str(".jpg|thumb|");
                    out.push_str(&caption.join(" "));
                    out.push_str("]]");
                }
                Piece::Category(name) => {
                    out.push_str("[[Category:");
                    out.push_str(&capitalize(name));
                    out.push_str("]]");
                }
                Piece::Reference(words) => {
                    out.push_str("<ref>");
                    out.push_str(&words.join(" "));
                    out.push_str("</ref>");
                }
                Piece::Comment(w) => {
                    out.push_str("<!-- ");
                    out.push_str(w);
                    out.push_str(" -->");
                }
                Piece::Bold(w) => {
                    out.push_str("'''");
                    out.push_str(w);
                    out.push_str("'''");
                }
                Piece::Ampersand => out.push_str("R&D <b>x</b>"),
            }
        }
        out
    }

    fn mutate(&mut self) {
        let target = self.cfg.words_per_revision.max(1);
        let edits = self.rng.random_range(1..5);
        for _ in 0..edits {
            let len = self.pieces.len();
            let grow = len < target / 2 || (len <= target * 3 / 2 && self.rng.random_bool(0.55));
            if grow {
                let at = self.rng.random_range(0..=len);
                let p = self.random_piece();
                self.pieces.insert(at, p);
            } else if len > 0 {
                let at = self.rng.random_range(0..len);
                if self.rng.random_bool(0.5) {
                    self.pieces.remove(at);
                } else {
                    self.pieces[at] = self.random_piece();
                }
            }
        }
    }

    fn start_page(&mut self) {
        let cfg = self.cfg;
        self.header = Some(cfg.page_header(self.page_index));
        let span = i64::from(cfg.span_days.max(1)) * 86_400;
        let origin = day_number(cfg.start_date) * 86_400;
        let mut times: Vec<i64> =
            (0..cfg.revisions_per_page).map(|_| origin + self.rng.random_range(0..span)).collect();
        times.sort_unstable();
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                times[i] = times[i - 1] + 1;
            }
        }
        self.times = times;
        let n = cfg.words_per_revision;
        self.pieces = (0..n).map(|_| self.random_piece()).collect();
        self.previous_id = None;
    }
}

impl Iterator for FixtureRecords<'_> {
    type Item = RevisionRecord;

    fn next(&mut self) -> Option<RevisionRecord> {
        loop {
            if self.page_index >= self.cfg.pages {
                return None;
            }
            if self.header.is_none() {
                self.start_page();
            }
            if self.rev_index >= self.cfg.revisions_per_page {
                self.page_index += 1;
                self.rev_index = 0;
                self.header = None;
                continue;
            }
            if self.rev_index > 0 {
                self.mutate();
            }
            let revision_id = self.next_revision_id;
            self.next_revision_id += 1;
            let deleted = self.rng.random_bool(0.02);
            let contributor = match self.rng.random_range(0..100) {
                0..=59 => Some(format!("User{}", self.rng.random_range(1..500))),
                60..=94 => Some(format!("10.{}.{}.{}", self.rng.random_range(0..256), self.rng.random_range(0..256), self.rng.random_range(1..255))),
                _ => None,
            };
            let comment = if self.rng.random_bool(0.7) {
                let n = self.rng.random_range(1..5);
                let mut c = self.words(n).join(" ");
                if self.rng.random_bool(0.1) {
                    c.push_str(" & \"copyedit\"");
                }
                Some(c)
            } else {
                None
            };
            let text = if deleted { String::new() } else { self.render() };
            let record = RevisionRecord {
                page: self.header.clone().expect("page started"),
                revision_id,
                parent_id: self.previous_id,
                timestamp: Timestamp::from_unix(self.times[self.rev_index]),
                contributor,
                comment,
                text,
                deleted,
            };
            self.previous_id = Some(revision_id);
            self.rev_index += 1;
            return Some(record);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSummary {
    pub pages: u64,
    pub revisions: u64,
    /// Size of the XML before compression.
    pub xml_bytes: u64,
    pub min_timestamp: Option<Timestamp>,
    pub max_timestamp: Option<Timestamp>,
}

impl FixtureSummary {
    fn observe(&mut self, rec: &RevisionRecord, new_page: bool) {
        self.revisions += 1;
        if new_page {
            self.pages += 1;
        }
        self.min_timestamp = Some(self.min_timestamp.map_or(rec.timestamp, |t| t.min(rec.timestamp)));
        self.max_timestamp = Some(self.max_timestamp.map_or(rec.timestamp, |t| t.max(rec.timestamp)));
    }
}

struct CountingWriter<W> {
    inner: W,
    count: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.count += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn xml_error(e: XmlWriteError) -> io::Error {
    match e {
        XmlWriteError::Io(e) => e,
        other => io::Error::new(io::ErrorKind::InvalidData, other),
    }
}

/// Writes `records` (already in dump order) as an export dump in the given
/// compression. Multistream output puts the header, every
/// `pages_per_stream` pages, and the footer into separate bzip2 streams.
pub fn write_dump<W, I>(records: I, compression: Compression, pages_per_stream: usize, out: W) -> io::Result<FixtureSummary>
where
    W: Write,
    I: IntoIterator<Item = RevisionRecord>,
{
    let mut summary = FixtureSummary::default();
    let mut last_page = None;
    match compression {
        Compression::None | Compression::Gzip | Compression::Bzip2 => {
            let sink: Box<dyn Write + '_> = match compression {
                Compression::Gzip => Box::new(flate2::write::GzEncoder::new(out, flate2::Compression::fast())),
                Compression::Bzip2 => Box::new(bzip2::write::BzEncoder::new(out, bzip2::Compression::fast())),
                _ => Box::new(out),
            };
            let mut w = DumpWriter::new(CountingWriter { inner: sink, count: 0 });
            for rec in records {
                let new_page = last_page != Some(rec.page.page_id);
                last_page = Some(rec.page.page_id);
                summary.observe(&rec, new_page);
                w.write_revision(&rec).map_err(xml_error)?;
            }
            let counting = w.finish()?;
            summary.xml_bytes = counting.count;
            finish_boxed(counting.inner)?;
        }
        Compression::Bzip2Multistream => {
            let mut out = out;
            let per_stream = pages_per_stream.max(1);
            let header = crate::dump::writer::DUMP_HEADER.as_bytes();
            write_stream(&mut out, header)?;
            summary.xml_bytes += header.len() as u64;
            let mut group = DumpWriter::new(Vec::new());
            let mut pages_in_group = 0;
            for rec in records {
                let new_page = last_page != Some(rec.page.page_id);
                if new_page && pages_in_group == per_stream {
                    summary.xml_bytes += flush_group(&mut out, group)?;
                    group = DumpWriter::new(Vec::new());
                    pages_in_group = 0;
                }
                if new_page {
                    pages_in_group += 1;
                }
                last_page = Some(rec.page.page_id);
                summary.observe(&rec, new_page);
                group.write_revision(&rec).map_err(xml_error)?;
            }
            if pages_in_group > 0 {
                summary.xml_bytes += flush_group(&mut out, group)?;
            }
            let footer = crate::dump::writer::DUMP_FOOTER.as_bytes();
            write_stream(&mut out, footer)?;
            summary.xml_bytes += footer.len() as u64;
            out.flush()?;
        }
    }
    Ok(summary)
}

fn finish_boxed(mut w: Box<dyn Write + '_>) -> io::Result<()> {
    w.flush()?;
    // Encoders finish on drop; flushing first surfaces write errors.
    drop(w);
    Ok(())
}

fn write_stream<W: Write>(out: &mut W, bytes: &[u8]) -> io::Result<()> {
    let mut enc = bzip2::write::BzEncoder::new(out, bzip2::Compression::fast());
    enc.write_all(bytes)?;
    enc.finish()?;
    Ok(())
}

/// Emits one page group as its own stream, without the dump header/footer.
fn flush_group<W: Write>(out: &mut W, group: DumpWriter<Vec<u8>>) -> io::Result<u64> {
    let xml = group.finish()?;
    let header = crate::dump::writer::DUMP_HEADER.len();
    let footer = crate::dump::writer::DUMP_FOOTER.len();
    let body = &xml[header..xml.len() - footer];
    write_stream(out, body)?;
    Ok(body.len() as u64)
}

pub fn write_fixture<W: Write>(cfg: &FixtureConfig, out: W) -> io::Result<FixtureSummary> {
    write_dump(cfg.records(), cfg.compression, cfg.pages_per_stream, out)
}

pub fn write_fixture_file(cfg: &FixtureConfig, path: &Path) -> io::Result<FixtureSummary> {
    let file = BufWriter::with_capacity(1 << 20, File::create(path)?);
    write_fixture(cfg, file)
}

/// Generates the fixture in memory.
pub fn fixture_bytes(cfg: &FixtureConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_fixture(cfg, &mut out).expect("writing to memory cannot fail");
    out
}

/// An entity that is linked unusually often during one week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    /// Title of the linked entity page.
    pub entity: String,
    /// Anchor texts used for links to the entity.
    pub anchors: Vec<String>,
    /// Any day in the spike week.
    pub week_of: NaiveDate,
    /// Extra linking revisions placed inside that week.
    pub revisions: usize,
}

/// A corpus with known activity spikes over a uniform background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeScenario {
    pub seed: u64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Pages whose revisions carry the links ("news" articles).
    pub news_pages: usize,
    /// Background revisions per news page, uniform over the range.
    pub background_revisions: usize,
    /// Background edits per entity page, uniform over the range.
    pub entity_page_revisions: usize,
    pub events: Vec<SpikeEvent>,
}

impl SpikeScenario {
    /// Election, football championship, games, and two athletes peaking in
    /// the same week, over 2011-01-01 .. 2013-07-13.
    pub fn olympics_2012(seed: u64) -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        let ev = |entity: &str, anchors: &[&str], week_of, revisions| SpikeEvent {
            entity: entity.to_string(),
            anchors: anchors.iter().map(|a| a.to_string()).collect(),
            week_of,
            revisions,
        };
        SpikeScenario {
            seed,
            start: d(2011, 1, 1),
            end: d(2013, 7, 13),
            news_pages: 30,
            background_revisions: 40,
            entity_page_revisions: 30,
            events: vec![
                ev("Obama", &["obama", "President Obama"], d(2012, 11, 6), 60),
                ev("Euro", &["euro", "Euro 2012"], d(2012, 7, 1), 50),
                ev("Olympic", &["olympic", "Olympic Games"], d(2012, 7, 27), 50),
                ev("Usain Bolt", &["Usain Bolt", "Bolt"], d(2012, 8, 5), 45),
                ev("Mo Farah", &["Mo Farah", "Farah"], d(2012, 8, 4), 45),
            ],
        }
    }

    pub fn entities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.events {
            if !out.contains(&e.entity) {
                out.push(e.entity.clone());
            }
        }
        out
    }

    /// All revisions in dump order (pages contiguous, each page's revisions
    /// chronological with parent links).
    pub fn records(&self) -> Vec<RevisionRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let entities = self.entities();
        let origin = day_number(self.start) * 86_400;
        let span = ((day_number(self.end) - day_number(self.start)).max(1)) * 86_400;
        // (page index, timestamp, text)
        let mut drafts: Vec<(usize, i64, String)> = Vec::new();
        let filler = |rng: &mut ChaCha8Rng, n: usize| -> String {
            (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        };
        for page in 0..self.news_pages {
            for _ in 0..self.background_revisions {
                let e = &self.events[rng.random_range(0..self.events.len())];
                let anchor = &e.anchors[rng.random_range(0..e.anchors.len())];
                let text = format!("{} [[{}|{}]] {}", filler(&mut rng, 6), e.entity, anchor, filler(&mut rng, 6));
                drafts.push((page, origin + rng.random_range(0..span), text));
            }
        }
        let entity_page = |name: &str| self.news_pages + entities.iter().position(|e| e == name).expect("known entity");
        for name in &entities {
            for _ in 0..self.entity_page_revisions {
                let text = format!("'''{name}''' {}", filler(&mut rng, 12));
                drafts.push((entity_page(name), origin + rng.random_range(0..span), text));
            }
        }
        for e in &self.events {
            let monday = day_number(crate::time::Granularity::Week.bucket_start(e.week_of)) * 86_400;
            for _ in 0..e.revisions {
                let t = monday + rng.random_range(0..7 * 86_400);
                let anchor = &e.anchors[rng.random_range(0..e.anchors.len())];
                let page = rng.random_range(0..self.news_pages.max(1));
                let text = format!("{} [[{}|{}]] {}", filler(&mut rng, 5), e.entity, anchor, filler(&mut rng, 5));
                drafts.push((page, t, text));
                let edit = format!("'''{}''' {} {}", e.entity, anchor, filler(&mut rng, 10));
                drafts.push((entity_page(&e.entity), monday + rng.random_range(0..7 * 86_400), edit));
            }
        }
        drafts.sort_by_key(|d| (d.0, d.1));
        let mut out = Vec::with_capacity(drafts.len());
        let mut prev: Option<(usize, u64)> = None;
        for (next_id, (page, t, text)) in (1u64..).zip(drafts) {
            let title = if page < self.news_pages {
                format!("News {}", capitalize(&syllable_word(page + 17)))
            } else {
                entities[page - self.news_pages].clone()
            };
            let parent_id = prev.filter(|(p, _)| *p == page).map(|(_, id)| id);
            out.push(RevisionRecord {
                page: PageHeader { page_id: page as u64 + 1, title, namespace: 0, redirect_target: None },
                revision_id: next_id,
                parent_id,
                timestamp: Timestamp::from_unix(t),
                contributor: Some(format!("Editor{}", next_id % 17)),
                comment: None,
                text,
                deleted: false,
            });
            prev = Some((page, next_id));
        }
        out
    }

    pub fn write_dump<W: Write>(&self, out: W) -> io::Result<FixtureSummary> {
        write_dump(self.records(), Compression::None, 100, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn titles_are_unique() {
        let cfg = FixtureConfig { pages: 2000, ..Default::default() };
        let mut seen = std::collections::HashSet::new();
        for i in 0..cfg.pages {
            assert!(seen.insert(cfg.page_header(i).title));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = FixtureConfig { pages: 5, revisions_per_page: 4, seed: 9, ..Default::default() };
        assert_eq!(fixture_bytes(&cfg), fixture_bytes(&cfg));
        let other = FixtureConfig { seed: 10, ..cfg.clone() };
        assert_ne!(fixture_bytes(&cfg), fixture_bytes(&other));
    }

    #[test]
    fn records_have_lineage_and_increasing_time() {
        let cfg = FixtureConfig { pages: 4, revisions_per_page: 6, ..Default::default() };
        let recs: Vec<_> = cfg.records().collect();
        assert_eq!(recs.len(), 24);
        for pair in recs.windows(2) {
            if pair[0].page.page_id == pair[1].page.page_id {
                assert_eq!(pair[1].parent_id, Some(pair[0].revision_id));
                assert!(pair[1].timestamp > pair[0].timestamp);
            } else {
                assert_eq!(pair[1].parent_id, None);
            }
        }
        assert_eq!(recs.iter().map(|r| r.page.page_id).collect::<std::collections::BTreeSet<_>>().len(), 4);
    }

    #[test]
    fn spike_records_are_grouped_by_page() {
        let s = SpikeScenario::olympics_2012(1);
        let recs = s.records();
        let mut closed = std::collections::HashSet::new();
        let mut current = None;
        for r in &recs {
            if current != Some(r.page.page_id) {
                if let Some(c) = current {
                    closed.insert(c);
                }
                assert!(!closed.contains(&r.page.page_id), "page {} not contiguous", r.page.page_id);
                current = Some(r.page.page_id);
            }
        }
    }
}
