use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Cursor, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::reader::RevisionStream;
use super::DumpError;

const IO_BUF: usize = 64 * 1024;
const GZIP_MAGIC: &[u8] = &[0x1f, 0x8b];
const BZIP2_MAGIC: &[u8] = b"BZh";
const BZ_BLOCK_MAGIC: [u8; 6] = [0x31, 0x41, 0x59, 0x26, 0x53, 0x59];
const BZ_EOS_MAGIC: [u8; 6] = [0x17, 0x72, 0x45, 0x38, 0x50, 0x90];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compression {
    None,
    Gzip,
    Bzip2,
    /// Concatenated bzip2 streams, each starting on a `<page>` boundary.
    Bzip2Multistream,
}

impl Compression {
    /// Formats in which a byte offset into the raw input is meaningful.
    pub fn is_seekable(self) -> bool {
        matches!(self, Compression::None | Compression::Bzip2Multistream)
    }

    /// Guess from the file extension. Multistream archives cannot be told
    /// apart from ordinary bzip2 by name; both decode the same way.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("gz") => Compression::Gzip,
            Some("bz2") => Compression::Bzip2,
            _ => Compression::None,
        }
    }

    fn sniff(head: &[u8]) -> &'static str {
        if head.is_empty() {
            "empty input"
        } else if head.starts_with(GZIP_MAGIC) {
            "gzip magic bytes"
        } else if head.starts_with(BZIP2_MAGIC) {
            "bzip2 magic bytes"
        } else {
            "uncompressed data"
        }
    }

    fn check_magic(self, head: &[u8]) -> Result<(), DumpError> {
        let ok = match self {
            Compression::None => !head.starts_with(GZIP_MAGIC) && !head.starts_with(BZIP2_MAGIC),
            Compression::Gzip => head.starts_with(GZIP_MAGIC),
            Compression::Bzip2 | Compression::Bzip2Multistream => head.starts_with(BZIP2_MAGIC),
        };
        if ok {
            Ok(())
        } else {
            Err(DumpError::CodecMismatch { declared: self, found: Compression::sniff(head) })
        }
    }
}

impl fmt::Display for Compression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Compression::None => "none",
            Compression::Gzip => "gzip",
            Compression::Bzip2 => "bzip2",
            Compression::Bzip2Multistream => "bzip2-multistream",
        })
    }
}

impl FromStr for Compression {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "xml" => Ok(Compression::None),
            "gzip" | "gz" => Ok(Compression::Gzip),
            "bzip2" | "bz2" => Ok(Compression::Bzip2),
            "bzip2-multistream" | "multistream" => Ok(Compression::Bzip2Multistream),
            other => Err(format!("unknown compression {other:?}")),
        }
    }
}

pub enum DumpLocation {
    Path(PathBuf),
    Memory(Arc<[u8]>),
    /// A one-shot byte stream; never seekable.
    Stream(Box<dyn Read + Send>),
}

impl fmt::Debug for DumpLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DumpLocation::Path(p) => f.debug_tuple("Path").field(p).finish(),
            DumpLocation::Memory(b) => write!(f, "Memory({} bytes)", b.len()),
            DumpLocation::Stream(_) => f.write_str("Stream"),
        }
    }
}

/// Half-open byte span `[start, end)` of a seekable dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteSpan {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug)]
pub struct DumpSource {
    pub location: DumpLocation,
    pub compression: Compression,
    /// Where to start reading; only valid for seekable compressions.
    pub start_offset: Option<u64>,
    /// Exclusive upper bound on raw bytes read.
    pub end_offset: Option<u64>,
}

impl DumpSource {
    /// A file, with compression guessed from its extension.
    pub fn path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let compression = Compression::from_path(&path);
        DumpSource { location: DumpLocation::Path(path), compression, start_offset: None, end_offset: None }
    }

    pub fn memory(bytes: impl Into<Arc<[u8]>>, compression: Compression) -> Self {
        DumpSource { location: DumpLocation::Memory(bytes.into()), compression, start_offset: None, end_offset: None }
    }

    pub fn stream(reader: impl Read + Send + 'static, compression: Compression) -> Self {
        DumpSource {
            location: DumpLocation::Stream(Box::new(reader)),
            compression,
            start_offset: None,
            end_offset: None,
        }
    }

    pub fn with_compression(mut self, compression: Compression) -> Self {
        self.compression = compression;
        self
    }

    pub fn with_span(mut self, span: ByteSpan) -> Self {
        self.start_offset = Some(span.start);
        self.end_offset = Some(span.end);
        self
    }

    /// A fresh source over the same seekable location.
    pub fn try_clone(&self) -> Option<DumpSource> {
        let location = match &self.location {
            DumpLocation::Path(p) => DumpLocation::Path(p.clone()),
            DumpLocation::Memory(b) => DumpLocation::Memory(b.clone()),
            DumpLocation::Stream(_) => return None,
        };
        Some(DumpSource {
            location,
            compression: self.compression,
            start_offset: self.start_offset,
            end_offset: self.end_offset,
        })
    }

    fn raw_len(&self) -> Result<u64, DumpError> {
        match &self.location {
            DumpLocation::Path(p) => Ok(std::fs::metadata(p)?.len()),
            DumpLocation::Memory(b) => Ok(b.len() as u64),
            DumpLocation::Stream(_) => Err(DumpError::NotSeekable("byte stream")),
        }
    }

    fn open_raw_at(&self, offset: u64) -> Result<Box<dyn Read + Send>, DumpError> {
        match &self.location {
            DumpLocation::Path(p) => {
                let mut f = File::open(p).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
                f.seek(SeekFrom::Start(offset))?;
                Ok(Box::new(f))
            }
            DumpLocation::Memory(b) => {
                let mut c = Cursor::new(b.clone());
                c.set_position(offset);
                Ok(Box::new(c))
            }
            DumpLocation::Stream(_) => Err(DumpError::NotSeekable("byte stream")),
        }
    }
}

/// Opens a dump for streaming. With a start offset the input is treated as a
/// fragment: a sequence of `<page>` elements, possibly followed by the
/// dump's closing tag.
pub fn open_dump(source: DumpSource) -> Result<RevisionStream, DumpError> {
    let DumpSource { location, compression, start_offset, end_offset } = source;
    let spanned = start_offset.is_some() || end_offset.is_some();
    if spanned && !compression.is_seekable() {
        return Err(DumpError::NotSeekable("gzip and single-stream bzip2 have no stable page offsets"));
    }
    let start = start_offset.unwrap_or(0);
    let raw: Box<dyn Read + Send> = match location {
        DumpLocation::Stream(r) if spanned => {
            drop(r);
            return Err(DumpError::NotSeekable("byte stream"));
        }
        DumpLocation::Stream(r) => r,
        seekable => DumpSource { location: seekable, compression, start_offset, end_offset }.open_raw_at(start)?,
    };
    let raw: Box<dyn Read + Send> = match end_offset {
        Some(end) => Box::new(raw.take(end.saturating_sub(start))),
        None => raw,
    };
    let mut raw = BufReader::with_capacity(IO_BUF, raw);
    compression.check_magic(raw.fill_buf()?)?;
    let (decoded, base): (Box<dyn BufRead + Send>, u64) = match compression {
        Compression::None => (Box::new(raw), start),
        Compression::Gzip => {
            (Box::new(BufReader::with_capacity(IO_BUF, flate2::bufread::MultiGzDecoder::new(raw))), 0)
        }
        Compression::Bzip2 | Compression::Bzip2Multistream => {
            (Box::new(BufReader::with_capacity(IO_BUF, bzip2::bufread::MultiBzDecoder::new(raw))), 0)
        }
    };
    Ok(RevisionStream::new(decoded, base, start_offset.is_some()))
}

/// Offset of the first page boundary at or after `from_offset`, or `None`
/// when no further page starts. For plain XML this is the offset of a
/// `<page>` tag; for bzip2-multistream it is the start of the first stream
/// whose decompressed content begins with `<page>`.
pub fn seek_page_boundary(source: &DumpSource, from_offset: u64) -> Result<Option<u64>, DumpError> {
    match source.compression {
        Compression::None => scan_plain(source, from_offset),
        Compression::Bzip2Multistream => scan_multistream(source, from_offset),
        Compression::Gzip | Compression::Bzip2 => Err(DumpError::NotSeekable("compressed as a single stream")),
    }
}

fn read_chunk(r: &mut dyn Read, buf: &mut Vec<u8>, want: usize) -> io::Result<usize> {
    let old = buf.len();
    buf.resize(old + want, 0);
    let mut filled = 0;
    while filled < want {
        match r.read(&mut buf[old + filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    buf.truncate(old + filled);
    Ok(filled)
}

/// Scans raw bytes from `from` for the first position accepted by `accept`,
/// which sees the window starting at each `needle` match and returns
/// `None` when it needs more lookahead.
fn scan_for(
    source: &DumpSource,
    from: u64,
    needle: &[u8],
    lookahead: usize,
    mut accept: impl FnMut(u64, &[u8]) -> Result<bool, DumpError>,
) -> Result<Option<u64>, DumpError> {
    const CHUNK: usize = 256 * 1024;
    let mut r = source.open_raw_at(from)?;
    let finder = memchr::memmem::Finder::new(needle);
    let keep_tail = needle.len() + lookahead;
    let mut buf = Vec::with_capacity(CHUNK + keep_tail);
    let mut base = from;
    loop {
        let eof = read_chunk(&mut r, &mut buf, CHUNK)? == 0;
        let mut at = 0;
        while let Some(i) = finder.find(&buf[at..]) {
            let p = at + i;
            if p + keep_tail > buf.len() && !eof {
                break;
            }
            if accept(base + p as u64, &buf[p..])? {
                return Ok(Some(base + p as u64));
            }
            at = p + 1;
        }
        if eof {
            return Ok(None);
        }
        let drop_upto = buf.len().saturating_sub(keep_tail);
        buf.drain(..drop_upto);
        base += drop_upto as u64;
    }
}

fn scan_plain(source: &DumpSource, from: u64) -> Result<Option<u64>, DumpError> {
    scan_for(source, from, b"<page", 1, |_, window| {
        Ok(matches!(window.get(5), Some(b'>' | b' ' | b'\t' | b'\n' | b'\r' | b'/')))
    })
}

fn scan_multistream(source: &DumpSource, from: u64) -> Result<Option<u64>, DumpError> {
    scan_for(source, from, BZIP2_MAGIC, 7, |offset, window| {
        let magic_ok = window.len() >= 10
            && (b'1'..=b'9').contains(&window[3])
            && (window[4..10] == BZ_BLOCK_MAGIC || window[4..10] == BZ_EOS_MAGIC);
        if !magic_ok {
            return Ok(false);
        }
        Ok(stream_starts_with_page(source, offset))
    })
}

/// Decodes the head of the single bzip2 stream at `offset`. A false
/// signature match inside compressed data simply fails to decode.
fn stream_starts_with_page(source: &DumpSource, offset: u64) -> bool {
    let Ok(raw) = source.open_raw_at(offset) else { return false };
    let mut decoder = bzip2::read::BzDecoder::new(BufReader::with_capacity(IO_BUF, raw));
    let mut head = Vec::with_capacity(512);
    let mut chunk = [0u8; 512];
    while head.len() < 512 {
        match decoder.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => head.extend_from_slice(&chunk[..n]),
            Err(_) => return false,
        }
        let trimmed = head.trim_ascii_start();
        if trimmed.len() >= 6 {
            break;
        }
    }
    let trimmed = head.trim_ascii_start();
    trimmed.starts_with(b"<page") && matches!(trimmed.get(5), Some(b'>' | b' ' | b'\t' | b'\n' | b'\r' | b'/'))
}

/// Cuts a seekable dump into at most `splits` spans that each start on a
/// page boundary. Parsing every span and concatenating the pages yields
/// exactly the pages of the whole dump.
pub fn plan_splits(source: &DumpSource, splits: usize) -> Result<Vec<ByteSpan>, DumpError> {
    if !source.compression.is_seekable() {
        return Err(DumpError::NotSeekable("compressed as a single stream"));
    }
    let len = source.raw_len()?;
    let splits = splits.max(1) as u64;
    let mut bounds: Vec<u64> = Vec::new();
    for i in 0..splits {
        let probe = len * i / splits;
        if bounds.last().is_some_and(|&b| b >= probe) {
            continue;
        }
        match seek_page_boundary(source, probe)? {
            Some(b) if bounds.last() != Some(&b) => bounds.push(b),
            Some(_) => {}
            None => break,
        }
    }
    Ok(spans_from_bounds(&bounds, len))
}

pub(crate) fn spans_from_bounds(bounds: &[u64], len: u64) -> Vec<ByteSpan> {
    bounds
        .iter()
        .enumerate()
        .map(|(i, &start)| ByteSpan { start, end: bounds.get(i + 1).copied().unwrap_or(len) })
        .collect()
}
