use std::io::{self, BufRead, Read};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

const REPLACEMENT: &[u8] = "\u{FFFD}".as_bytes();

/// `BufRead` adapter that guarantees valid UTF-8 downstream: every invalid
/// sequence becomes U+FFFD and bumps a shared counter.
pub(crate) struct LossyUtf8<R> {
    inner: R,
    out: Vec<u8>,
    pos: usize,
    /// Incomplete trailing sequence carried into the next fill.
    carry: Vec<u8>,
    replaced: Arc<AtomicU64>,
}

impl<R: BufRead> LossyUtf8<R> {
    pub(crate) fn new(inner: R, replaced: Arc<AtomicU64>) -> Self {
        LossyUtf8 { inner, out: Vec::new(), pos: 0, carry: Vec::new(), replaced }
    }

    fn refill(&mut self) -> io::Result<()> {
        self.out.clear();
        self.pos = 0;
        let chunk = self.inner.fill_buf()?;
        if chunk.is_empty() {
            if !self.carry.is_empty() {
                self.carry.clear();
                self.out.extend_from_slice(REPLACEMENT);
                self.replaced.fetch_add(1, Ordering::Relaxed);
            }
            return Ok(());
        }
        let n = chunk.len();
        if self.carry.is_empty() {
            Self::decode_into(chunk, &mut self.out, &mut self.carry, &self.replaced);
        } else {
            let mut joined = std::mem::take(&mut self.carry);
            joined.extend_from_slice(chunk);
            Self::decode_into(&joined, &mut self.out, &mut self.carry, &self.replaced);
        }
        self.inner.consume(n);
        Ok(())
    }

    fn decode_into(mut rest: &[u8], out: &mut Vec<u8>, carry: &mut Vec<u8>, replaced: &AtomicU64) {
        loop {
            match std::str::from_utf8(rest) {
                Ok(_) => {
                    out.extend_from_slice(rest);
                    return;
                }
                Err(e) => {
                    let valid = e.valid_up_to();
                    out.extend_from_slice(&rest[..valid]);
                    match e.error_len() {
                        Some(bad) => {
                            out.extend_from_slice(REPLACEMENT);
                            replaced.fetch_add(1, Ordering::Relaxed);
                            rest = &rest[valid + bad..];
                        }
                        None => {
                            carry.extend_from_slice(&rest[valid..]);
                            return;
                        }
                    }
                }
            }
        }
    }
}

impl<R: BufRead> Read for LossyUtf8<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let available = self.fill_buf()?;
        let n = available.len().min(buf.len());
        buf[..n].copy_from_slice(&available[..n]);
        self.consume(n);
        Ok(n)
    }
}

impl<R: BufRead> BufRead for LossyUtf8<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        // A fill may legitimately produce nothing (only a carried prefix), so
        // loop until there is output or the inner reader is exhausted.
        while self.pos >= self.out.len() {
            let had_input = !self.inner.fill_buf()?.is_empty() || !self.carry.is_empty();
            self.refill()?;
            if !had_input {
                break;
            }
        }
        Ok(&self.out[self.pos..])
    }

    fn consume(&mut self, amt: usize) {
        self.pos = (self.pos + amt).min(self.out.len());
    }
}
