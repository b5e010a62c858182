//! The shared tokenizer and entity-key normalization.
//!
//! Every component that turns text into terms goes through [`tokenize`], so
//! fulltext payloads, deltas and index postings agree on the vocabulary.

use unicode_segmentation::UnicodeSegmentation;

/// Recorded in index metadata; an index built with a different tokenizer
/// refuses to open.
pub const TOKENIZER_ID: &str = "uax29-words-lowercase-v1";

/// UAX #29 word segmentation, keeping only segments with a letter or digit,
/// lowercased. No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

/// Calls `f` for each token without collecting.
pub fn for_each_token(text: &str, mut f: impl FnMut(&str)) {
    let mut buf = String::new();
    for w in text.unicode_words() {
        if w.bytes().all(|b| b.is_ascii() && !b.is_ascii_uppercase()) {
            f(w);
        } else {
            buf.clear();
            buf.extend(w.chars().flat_map(char::to_lowercase));
            f(&buf);
        }
    }
}

/// Index key of an entity: trimmed, lowercased, with runs of whitespace and
/// underscores folded into a single `_`. "Usain Bolt" becomes `usain_bolt`.
pub fn entity_key(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    let mut pending_sep = false;
    for c in title.trim().chars() {
        if c.is_whitespace() || c == '_' {
            pending_sep = !out.is_empty();
            continue;
        }
        if pending_sep {
            out.push('_');
            pending_sep = false;
        }
        out.extend(c.to_lowercase());
    }
    out
}
