use std::io::BufRead;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};

use super::utf8::LossyUtf8;
use super::{DumpError, DumpEvent, PageHeader, RevisionRecord};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Page,
    Title,
    Ns,
    PageId,
    Redirect,
    Revision,
    RevId,
    ParentId,
    Timestamp,
    Contributor,
    Username,
    Ip,
    Comment,
    Text,
    Other,
}

impl Tag {
    fn classify(parent: Option<Tag>, name: &[u8], revision_root: bool) -> Tag {
        match (parent, name) {
            (None | Some(Tag::Other), b"page") => Tag::Page,
            (None, b"revision") if revision_root => Tag::Revision,
            (Some(Tag::Page), b"title") => Tag::Title,
            (Some(Tag::Page), b"ns") => Tag::Ns,
            (Some(Tag::Page), b"id") => Tag::PageId,
            (Some(Tag::Page), b"redirect") => Tag::Redirect,
            (Some(Tag::Page), b"revision") => Tag::Revision,
            (Some(Tag::Revision), b"id") => Tag::RevId,
            (Some(Tag::Revision), b"parentid") => Tag::ParentId,
            (Some(Tag::Revision), b"timestamp") => Tag::Timestamp,
            (Some(Tag::Revision), b"contributor") => Tag::Contributor,
            (Some(Tag::Revision), b"comment") => Tag::Comment,
            (Some(Tag::Revision), b"text") => Tag::Text,
            (Some(Tag::Contributor), b"username") => Tag::Username,
            (Some(Tag::Contributor), b"ip") => Tag::Ip,
            _ => Tag::Other,
        }
    }

    fn is_leaf(self) -> bool {
        matches!(
            self,
            Tag::Title
                | Tag::Ns
                | Tag::PageId
                | Tag::RevId
                | Tag::ParentId
                | Tag::Timestamp
                | Tag::Username
                | Tag::Ip
                | Tag::Comment
                | Tag::Text
        )
    }
}

#[derive(Default)]
struct PageDraft {
    id: Option<u64>,
    title: Option<String>,
    namespace: Option<i32>,
    redirect: Option<String>,
}

#[derive(Default)]
struct RevisionDraft {
    id: Option<u64>,
    parent: Option<u64>,
    timestamp: Option<String>,
    contributor: Option<String>,
    comment: Option<String>,
    text: Option<String>,
    deleted: bool,
}

type BoxedInput = Box<dyn BufRead + Send>;

/// Pull-based iterator over the pages and revisions of one dump (or one
/// byte span of a seekable dump).
pub struct RevisionStream {
    reader: Reader<LossyUtf8<BoxedInput>>,
    buf: Vec<u8>,
    stack: Vec<Tag>,
    text: String,
    capturing: bool,
    page: PageDraft,
    header: Option<PageHeader>,
    rev: RevisionDraft,
    queued: Option<Result<DumpEvent, DumpError>>,
    base_offset: u64,
    revision_root: bool,
    finished: bool,
    replaced: Arc<AtomicU64>,
}

impl RevisionStream {
    pub(crate) fn new(input: BoxedInput, base_offset: u64, fragment: bool) -> Self {
        let replaced = Arc::new(AtomicU64::new(0));
        let mut reader = Reader::from_reader(LossyUtf8::new(input, replaced.clone()));
        let config = reader.config_mut();
        config.check_end_names = true;
        // A byte span ends with the dump's closing `</mediawiki>`.
        config.allow_unmatched_ends = fragment;
        config.expand_empty_elements = false;
        RevisionStream {
            reader,
            buf: Vec::with_capacity(8 * 1024),
            stack: Vec::with_capacity(8),
            text: String::new(),
            capturing: false,
            page: PageDraft::default(),
            header: None,
            rev: RevisionDraft::default(),
            queued: None,
            base_offset,
            revision_root: false,
            finished: false,
            replaced,
        }
    }

    /// Number of invalid UTF-8 sequences replaced with U+FFFD so far.
    pub fn replaced_sequences(&self) -> u64 {
        self.replaced.load(Ordering::Relaxed)
    }

    /// Bytes of (decompressed) input consumed so far.
    pub fn byte_offset(&self) -> u64 {
        self.base_offset + self.reader.buffer_position()
    }

    /// Only the revision events, each carrying its page header.
    pub fn revisions(self) -> impl Iterator<Item = Result<RevisionRecord, DumpError>> {
        self.filter_map(|ev| match ev {
            Ok(DumpEvent::Revision(r)) => Some(Ok(r)),
            Ok(DumpEvent::Page(_)) => None,
            Err(e) => Some(Err(e)),
        })
    }

    fn malformed(&self, message: impl Into<String>) -> DumpError {
        DumpError::MalformedXml {
            offset: self.base_offset + self.reader.error_position(),
            message: message.into(),
        }
    }

    fn invalid(&self, field: &'static str, value: &str) -> DumpError {
        DumpError::InvalidField { field, value: value.to_string(), offset: self.byte_offset() }
    }

    fn open(&mut self, tag: Tag, start: &BytesStart<'_>) -> Result<Option<DumpEvent>, DumpError> {
        if tag.is_leaf() {
            self.text.clear();
            self.capturing = true;
        }
        match tag {
            Tag::Page => {
                self.page = PageDraft::default();
                self.header = None;
            }
            Tag::Redirect => {
                if let Some(attr) = self.attribute(start, "title")? {
                    self.page.redirect = Some(attr);
                }
            }
            Tag::Revision => {
                self.rev = RevisionDraft::default();
                if !self.revision_root && self.header.is_none() {
                    let header = self.finish_header()?;
                    self.header = Some(header.clone());
                    return Ok(Some(DumpEvent::Page(header)));
                }
            }
            Tag::Text if self.attribute(start, "deleted")?.is_some() => self.rev.deleted = true,
            _ => {}
        }
        Ok(None)
    }

    fn close(&mut self, tag: Tag) -> Result<Option<DumpEvent>, DumpError> {
        if tag.is_leaf() {
            self.capturing = false;
        }
        match tag {
            Tag::Title => self.page.title = Some(std::mem::take(&mut self.text)),
            Tag::Ns => {
                let v = self.text.trim();
                let ns = v.parse().map_err(|_| self.invalid("ns", v))?;
                self.page.namespace = Some(ns);
            }
            Tag::PageId => self.page.id = Some(self.positive_id("id")?),
            Tag::RevId => self.rev.id = Some(self.positive_id("id")?),
            Tag::ParentId => self.rev.parent = Some(self.positive_id("parentid")?),
            Tag::Timestamp => self.rev.timestamp = Some(std::mem::take(&mut self.text)),
            Tag::Username | Tag::Ip => self.rev.contributor = Some(std::mem::take(&mut self.text)),
            Tag::Comment => self.rev.comment = Some(std::mem::take(&mut self.text)),
            Tag::Text => {
                self.rev.text = Some(if self.rev.deleted { String::new() } else { std::mem::take(&mut self.text) })
            }
            Tag::Revision => return self.finish_revision().map(|r| Some(DumpEvent::Revision(r))),
            Tag::Page => {
                if self.header.is_none() {
                    let header = self.finish_header()?;
                    return Ok(Some(DumpEvent::Page(header)));
                }
                self.header = None;
            }
            _ => {}
        }
        Ok(None)
    }

    fn positive_id(&self, field: &'static str) -> Result<u64, DumpError> {
        let v = self.text.trim();
        match v.parse::<u64>() {
            Ok(id) if id > 0 => Ok(id),
            _ => Err(self.invalid(field, v)),
        }
    }

    fn attribute(&self, start: &BytesStart<'_>, name: &str) -> Result<Option<String>, DumpError> {
        for attr in start.attributes() {
            let attr = attr.map_err(|e| self.malformed(e.to_string()))?;
            if attr.key.local_name().as_ref() == name {
                let value = attr
                    .normalized_value(XmlVersion::Implicit1_0)
                    .map_err(|e| self.malformed(e.to_string()))?;
                return Ok(Some(value.into_owned()));
            }
        }
        Ok(None)
    }

    fn finish_header(&mut self) -> Result<PageHeader, DumpError> {
        let offset = self.byte_offset();
        let page_id = self.page.id.ok_or(DumpError::MissingField { field: "id", offset })?;
        let title = self.page.title.take().ok_or(DumpError::MissingField { field: "title", offset })?;
        if title.trim().is_empty() {
            return Err(self.invalid("title", &title));
        }
        Ok(PageHeader {
            page_id,
            title,
            namespace: self.page.namespace.unwrap_or(0),
            redirect_target: self.page.redirect.take(),
        })
    }

    fn finish_revision(&mut self) -> Result<RevisionRecord, DumpError> {
        let offset = self.byte_offset();
        let draft = std::mem::take(&mut self.rev);
        let revision_id = draft.id.ok_or(DumpError::MissingField { field: "id", offset })?;
        let raw_ts = draft.timestamp.ok_or(DumpError::MissingField { field: "timestamp", offset })?;
        let timestamp = Timestamp::parse_iso(raw_ts.trim())
            .map_err(|_| DumpError::BadTimestamp { value: raw_ts.clone(), offset })?;
        if draft.parent == Some(revision_id) {
            return Err(self.invalid("parentid", &revision_id.to_string()));
        }
        let page = self
            .header
            .clone()
            .ok_or_else(|| self.malformed("<revision> outside of a <page>"))?;
        Ok(RevisionRecord {
            page,
            revision_id,
            parent_id: draft.parent,
            timestamp,
            contributor: draft.contributor,
            comment: draft.comment,
            text: draft.text.unwrap_or_default(),
            deleted: draft.deleted,
        })
    }

    fn step(&mut self) -> Option<Result<DumpEvent, DumpError>> {
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev,
                Err(quick_xml::Error::Io(e)) => {
                    let err = std::io::Error::new(e.kind(), e.to_string());
                    return Some(Err(DumpError::Io(err)));
                }
                Err(e) => return Some(Err(self.malformed(e.to_string()))),
            };
            // Events borrow `self.buf`; copy what we need before touching `self`.
            match event {
                Event::Start(start) => {
                    let start = start.into_owned();
                    let tag = Tag::classify(self.stack.last().copied(), start.local_name().as_ref().as_bytes(), self.revision_root);
                    self.stack.push(tag);
                    match self.open(tag, &start) {
                        Ok(Some(ev)) => return Some(Ok(ev)),
                        Ok(None) => {}
                        Err(e) => return Some(Err(e)),
                    }
                }
                Event::Empty(start) => {
                    let start = start.into_owned();
                    let tag = Tag::classify(self.stack.last().copied(), start.local_name().as_ref().as_bytes(), self.revision_root);
                    let opened = self.open(tag, &start);
                    let closed = self.close(tag);
                    match (opened, closed) {
                        (Err(e), _) => return Some(Err(e)),
                        (Ok(Some(first)), second) => {
                            self.queued = second.transpose();
                            return Some(Ok(first));
                        }
                        (Ok(None), Ok(Some(ev))) => return Some(Ok(ev)),
                        (Ok(None), Err(e)) => return Some(Err(e)),
                        (Ok(None), Ok(None)) => {}
                    }
                }
                Event::End(_) => {
                    // Unmatched closing tags only get this far in fragment mode.
                    let Some(tag) = self.stack.pop() else { continue };
                    match self.close(tag) {
                        Ok(Some(ev)) => return Some(Ok(ev)),
                        Ok(None) => {}
                        Err(e) => return Some(Err(e)),
                    }
                }
                Event::Text(t) if self.capturing => self.text.push_str(&t.xml10_content()),
                Event::CData(c) if self.capturing => self.text.push_str(&c.xml10_content()),
                Event::GeneralRef(r) => {
                    let resolved = match r.resolve_char_ref() {
                        Ok(Some(ch)) => Some(ch),
                        Ok(None) => None,
                        Err(e) => return Some(Err(self.malformed(e.to_string()))),
                    };
                    let name = r.into_inner().into_owned();
                    let piece: String = match resolved {
                        Some(ch) => ch.to_string(),
                        None => match quick_xml::escape::resolve_predefined_entity(&name) {
                            Some(s) => s.to_string(),
                            None => return Some(Err(self.malformed(format!("undefined entity &{name};")))),
                        },
                    };
                    if self.capturing {
                        self.text.push_str(&piece);
                    }
                }
                Event::Eof => {
                    if let Some(open) = self.stack.last() {
                        return Some(Err(self.malformed(format!("unexpected end of data inside {open:?}"))));
                    }
                    return None;
                }
                _ => {}
            }
        }
    }
}

impl Iterator for RevisionStream {
    type Item = Result<DumpEvent, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        if let Some(queued) = self.queued.take() {
            if queued.is_err() {
                self.finished = true;
            }
            return Some(queued);
        }
        let item = self.step();
        match &item {
            None | Some(Err(_)) => self.finished = true,
            Some(Ok(_)) => {}
        }
        item
    }
}

/// Parses a single `<revision>` element (the wrapper may be omitted) in the
/// context of an already-known page.
pub fn parse_revision(fragment: &str, page: &PageHeader) -> Result<RevisionRecord, DumpError> {
    let trimmed = fragment.trim_start();
    let owned;
    let xml = if trimmed.starts_with("<revision") {
        trimmed
    } else {
        owned = format!("<revision>{fragment}</revision>");
        owned.as_str()
    };
    let input: BoxedInput = Box::new(std::io::Cursor::new(xml.as_bytes().to_vec()));
    let mut stream = RevisionStream::new(input, 0, false);
    stream.revision_root = true;
    stream.header = Some(page.clone());
    for ev in stream {
        if let DumpEvent::Revision(r) = ev? {
            return Ok(r);
        }
    }
    Err(DumpError::MalformedXml { offset: 0, message: "fragment contains no <revision> element".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page() -> PageHeader {
        PageHeader { page_id: 1, title: "Barack Obama".into(), namespace: 0, redirect_target: None }
    }

    #[test]
    fn parses_minimal_fragment() {
        let r = parse_revision("<id>7</id><timestamp>2011-01-01T00:00:00Z</timestamp><text>x</text>", &page()).unwrap();
        assert_eq!(r.revision_id, 7);
        assert_eq!(r.timestamp.to_iso(), "2011-01-01T00:00:00Z");
        assert_eq!(r.text, "x");
        assert_eq!(r.parent_id, None);
        assert_eq!(r.contributor, None);
        assert_eq!(r.comment, None);
        assert_eq!(r.page, page());
    }

    #[test]
    fn parses_parent_id() {
        let r = parse_revision("<parentid>7</parentid><id>9</id><timestamp>2011-01-01T00:00:00Z</timestamp>", &page())
            .unwrap();
        assert_eq!(r.parent_id, Some(7));
        assert_eq!(r.revision_id, 9);
        assert_eq!(r.text, "");
    }

    #[test]
    fn missing_timestamp_is_an_error() {
        let err = parse_revision("<id>7</id><text>x</text>", &page()).unwrap_err();
        assert!(matches!(err, DumpError::MissingField { field: "timestamp", .. }), "{err}");
    }

    #[test]
    fn missing_id_is_an_error() {
        let err = parse_revision("<timestamp>2011-01-01T00:00:00Z</timestamp>", &page()).unwrap_err();
        assert!(matches!(err, DumpError::MissingField { field: "id", .. }), "{err}");
    }

    #[test]
    fn bad_timestamp_is_an_error() {
        let err = parse_revision("<id>7</id><timestamp>01/01/2011</timestamp>", &page()).unwrap_err();
        assert!(matches!(err, DumpError::BadTimestamp { .. }), "{err}");
    }

    #[test]
    fn contributor_id_does_not_clobber_revision_id() {
        let r = parse_revision(
            "<revision><id>5</id><timestamp>2011-01-01T00:00:00Z</timestamp>\
             <contributor><username>Alice</username><id>99</id></contributor>\
             <comment>fix &amp; tidy</comment><text>a &lt;b&gt; &#233;</text></revision>",
            &page(),
        )
        .unwrap();
        assert_eq!(r.revision_id, 5);
        assert_eq!(r.contributor.as_deref(), Some("Alice"));
        assert_eq!(r.comment.as_deref(), Some("fix & tidy"));
        assert_eq!(r.text, "a <b> é");
    }

    #[test]
    fn deleted_text_yields_empty_text_and_flag() {
        let r = parse_revision(
            "<id>5</id><timestamp>2011-01-01T00:00:00Z</timestamp><contributor deleted=\"deleted\"/><text deleted=\"deleted\"/>",
            &page(),
        )
        .unwrap();
        assert!(r.deleted);
        assert_eq!(r.text, "");
        assert_eq!(r.contributor, None);
    }

    #[test]
    fn self_parent_is_rejected() {
        let err = parse_revision("<id>5</id><parentid>5</parentid><timestamp>2011-01-01T00:00:00Z</timestamp>", &page())
            .unwrap_err();
        assert!(matches!(err, DumpError::InvalidField { field: "parentid", .. }));
    }
}
