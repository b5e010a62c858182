//! Writes revisions back out in the MediaWiki export format.

use std::borrow::Cow;
use std::io::{self, Write};

use super::RevisionRecord;

/// Everything before the first `<page>`.
pub const DUMP_HEADER: &str = "<mediawiki version=\"0.10\" xml:lang=\"en\">\n  <siteinfo />\n";
pub const DUMP_FOOTER: &str = "</mediawiki>\n";

#[derive(Debug, thiserror::Error)]
pub enum XmlWriteError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{field} of revision {revision_id} contains U+{code:04X}, which XML 1.0 cannot represent")]
    Unrepresentable { field: &'static str, revision_id: u64, code: u32 },
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..='\u{10FFFF}')
}

/// Escapes character data. Carriage returns become `&#13;` so that XML
/// end-of-line normalization cannot alter the text.
fn escape<'a>(s: &'a str, field: &'static str, revision_id: u64) -> Result<Cow<'a, str>, XmlWriteError> {
    if let Some(bad) = s.chars().find(|&c| !is_xml_char(c)) {
        return Err(XmlWriteError::Unrepresentable { field, revision_id, code: bad as u32 });
    }
    if !s.bytes().any(|b| matches!(b, b'&' | b'<' | b'>' | b'"' | b'\r')) {
        return Ok(Cow::Borrowed(s));
    }
    let mut out = String::with_capacity(s.len() + 16);
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    Ok(Cow::Owned(out))
}

fn looks_like_ip(s: &str) -> bool {
    s.parse::<std::net::IpAddr>().is_ok()
}

/// Streams revisions into export-format XML. Consecutive revisions of the
/// same page share one `<page>` element.
pub struct DumpWriter<W: Write> {
    out: W,
    open_page: Option<u64>,
    started: bool,
}

impl<W: Write> DumpWriter<W> {
    pub fn new(out: W) -> Self {
        DumpWriter { out, open_page: None, started: false }
    }

    fn start(&mut self) -> io::Result<()> {
        if !self.started {
            self.out.write_all(DUMP_HEADER.as_bytes())?;
            self.started = true;
        }
        Ok(())
    }

    pub fn write_revision(&mut self, rec: &RevisionRecord) -> Result<(), XmlWriteError> {
        self.start()?;
        let id = rec.revision_id;
        // Escape everything up front so a bad record leaves no partial output.
        let title = escape(&rec.page.title, "title", id)?;
        let redirect = rec.page.redirect_target.as_deref().map(|r| escape(r, "redirect", id)).transpose()?;
        let contributor = rec.contributor.as_deref().map(|c| escape(c, "contributor", id)).transpose()?;
        let comment = rec.comment.as_deref().map(|c| escape(c, "comment", id)).transpose()?;
        let text = escape(&rec.text, "text", id)?;

        let mut s = String::with_capacity(rec.text.len() + 512);
        if self.open_page != Some(rec.page.page_id) {
            if self.open_page.is_some() {
                s.push_str("  </page>\n");
            }
            s.push_str("  <page>\n    <title>");
            s.push_str(&title);
            s.push_str("</title>\n    <ns>");
            s.push_str(&rec.page.namespace.to_string());
            s.push_str("</ns>\n    <id>");
            s.push_str(&rec.page.page_id.to_string());
            s.push_str("</id>\n");
            if let Some(r) = &redirect {
                s.push_str("    <redirect title=\"");
                s.push_str(r);
                s.push_str("\" />\n");
            }
            self.open_page = Some(rec.page.page_id);
        }
        s.push_str("    <revision>\n      <id>");
        s.push_str(&id.to_string());
        s.push_str("</id>\n");
        if let Some(p) = rec.parent_id {
            s.push_str("      <parentid>");
            s.push_str(&p.to_string());
            s.push_str("</parentid>\n");
        }
        s.push_str("      <timestamp>");
        s.push_str(&rec.timestamp.to_iso());
        s.push_str("</timestamp>\n");
        match (&contributor, rec.contributor.as_deref()) {
            (Some(c), Some(raw)) => {
                let tag = if looks_like_ip(raw) { "ip" } else { "username" };
                s.push_str("      <contributor>\n        <");
                s.push_str(tag);
                s.push('>');
                s.push_str(c);
                s.push_str("</");
                s.push_str(tag);
                s.push_str(">\n      </contributor>\n");
            }
            _ => s.push_str("      <contributor deleted=\"deleted\" />\n"),
        }
        if let Some(c) = &comment {
            s.push_str("      <comment>");
            s.push_str(c);
            s.push_str("</comment>\n");
        }
        if rec.deleted {
            s.push_str("      <text bytes=\"0\" deleted=\"deleted\" />\n");
        } else {
            s.push_str("      <text bytes=\"");
            s.push_str(&rec.text_bytes().to_string());
            s.push_str("\" xml:space=\"preserve\">");
            s.push_str(&text);
            s.push_str("</text>\n");
        }
        s.push_str("    </revision>\n");
        self.out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn get_ref(&self) -> &W {
        &self.out
    }

    /// Closes any open page and writes the footer.
    pub fn finish(mut self) -> io::Result<W> {
        self.start()?;
        if self.open_page.take().is_some() {
            self.out.write_all(b"  </page>\n")?;
        }
        self.out.write_all(DUMP_FOOTER.as_bytes())?;
        self.out.flush()?;
        Ok(self.out)
    }
}
