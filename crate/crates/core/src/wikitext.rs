//! Just enough wikitext to find internal links and to strip markup.
//!
//! Nothing here fails: malformed markup yields fewer links or more literal
//! text. The scanners are linear in the input length.
//!
//! Link rules:
//! * `[[Target]]` has anchor `Target` as written (fragment included);
//!   `[[Target|a|b]]` has anchor `b` (text after the last pipe); an empty
//!   label (`[[Target (x)|]]`) falls back to the target without namespace or
//!   trailing parenthetical.
//! * Targets lose their `#fragment`, turn `_` into spaces, collapse runs of
//!   whitespace and get an uppercase first letter.
//! * `File:`, `Image:` and `Category:` links are excluded, case-insensitively,
//!   unless written with a leading colon. Links inside their captions count.
//! * A non-excluded link whose text contains another link is dropped; the
//!   inner link counts.
//! * Links inside `<!-- -->` comments and `<nowiki>` are not links. Links
//!   inside templates and `<ref>` are.

use serde::{Deserialize, Serialize};

/// An internal link with its visible text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnchorLink {
    pub source_page_id: u64,
    pub target_title: String,
    pub anchor_text: String,
    /// Ordinal of the link within the revision text, from 0.
    pub position: u32,
}

const EXCLUDED_NAMESPACES: &[&str] = &["file", "image", "category"];

/// Removes comments and neutralizes `<nowiki>` content so that later passes
/// cannot see markup in either.
fn preclean(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        let comment = rest.find("<!--");
        let nowiki = find_ascii_ci(rest, "<nowiki");
        let (at, is_comment) = match (comment, nowiki) {
            (None, None) => break,
            (Some(c), None) => (c, true),
            (None, Some(n)) => (n, false),
            (Some(c), Some(n)) => if c < n { (c, true) } else { (n, false) },
        };
        out.push_str(&rest[..at]);
        rest = &rest[at..];
        if is_comment {
            rest = match rest[4..].find("-->") {
                Some(end) => &rest[4 + end + 3..],
                None => "",
            };
            continue;
        }
        let Some(tag_end) = rest.find('>') else {
            out.push_str(rest);
            rest = "";
            break;
        };
        let tag = &rest[..tag_end + 1];
        // `<nowikix>` is some other tag.
        if !matches!(tag.as_bytes().get(7), Some(b'>' | b'/' | b' ' | b'\t' | b'\n')) {
            out.push_str(tag);
            rest = &rest[tag_end + 1..];
            continue;
        }
        rest = &rest[tag_end + 1..];
        out.push(' ');
        if tag.ends_with("/>") {
            continue;
        }
        let close = find_ascii_ci(rest, "</nowiki>");
        let inner_end = close.unwrap_or(rest.len());
        out.extend(rest[..inner_end].chars().map(|c| match c {
            '[' | ']' | '{' | '}' | '|' | '<' | '>' => ' ',
            c => c,
        }));
        rest = match close {
            Some(c) => &rest[c + "</nowiki>".len()..],
            None => "",
        };
        out.push(' ');
    }
    out.push_str(rest);
    out
}

fn find_ascii_ci(hay: &str, needle: &str) -> Option<usize> {
    let n = needle.as_bytes();
    hay.as_bytes().windows(n.len()).position(|w| w.eq_ignore_ascii_case(n))
}

/// Byte spans `[start, end)` of balanced `open`..`close` pairs, in the order
/// they close. Unmatched openers are ignored.
fn bracket_spans(s: &str, open: u8, close: u8) -> Vec<(usize, usize)> {
    let b = s.as_bytes();
    let mut stack = Vec::new();
    let mut spans = Vec::new();
    let mut i = 0;
    while i + 1 < b.len() {
        if b[i] == open && b[i + 1] == open {
            stack.push(i);
            i += 2;
        } else if b[i] == close && b[i + 1] == close {
            if let Some(start) = stack.pop() {
                spans.push((start, i + 2));
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    spans
}

/// Keeps only spans not contained in another kept span, sorted by start.
fn outermost(mut spans: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    spans.sort_by_key(|&(s, e)| (s, std::cmp::Reverse(e)));
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for span in spans {
        match out.last() {
            Some(&(_, end)) if span.0 < end => {}
            _ => out.push(span),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum LinkKind {
    Link { target: String, anchor: String },
    /// File, Image or Category.
    Excluded,
    /// Contains another link; not a link itself.
    Abandoned,
    /// Syntactically a link but with an unusable target or anchor. Holds the
    /// visible text.
    Invalid(String),
}

fn classify(content: &str) -> LinkKind {
    let (raw_target, label) = match content.find('|') {
        Some(p) => (&content[..p], Some(&content[content.rfind('|').unwrap_or(p) + 1..])),
        None => (content, None),
    };
    let written = raw_target.trim();
    let (forced, written) = match written.strip_prefix(':') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, written),
    };
    if !forced {
        if let Some((ns, _)) = written.split_once(':') {
            let ns = ns.trim().to_lowercase();
            if EXCLUDED_NAMESPACES.contains(&ns.as_str()) {
                return LinkKind::Excluded;
            }
        }
    }
    if content.contains("[[") {
        return LinkKind::Abandoned;
    }
    let visible = label.unwrap_or(written);
    let target = normalize_target(written);
    if target.is_empty() || written.contains(['[', ']', '{', '}', '<', '>', '\n']) {
        return LinkKind::Invalid(visible.to_string());
    }
    let anchor = match label {
        Some(l) if !l.trim().is_empty() => clean_anchor(l),
        Some(_) => clean_anchor(&pipe_trick(written)),
        None => clean_anchor(written),
    };
    if anchor.is_empty() {
        return LinkKind::Invalid(visible.to_string());
    }
    LinkKind::Link { target, anchor }
}

/// `Help:Contents (manual)` shows as `Contents`.
fn pipe_trick(target: &str) -> String {
    let target = target.split('#').next().unwrap_or("");
    let no_ns = target.split_once(':').map_or(target, |(_, rest)| rest);
    let trimmed = match no_ns.trim_end().strip_suffix(')').and_then(|s| s.rfind('(').map(|i| &s[..i])) {
        Some(base) => base,
        None => no_ns,
    };
    trimmed.replace('_', " ").trim().to_string()
}

/// Canonical page title of a link target: no fragment, spaces for
/// underscores, single spaces, uppercase first letter.
pub fn normalize_target(raw: &str) -> String {
    let no_fragment = raw.split('#').next().unwrap_or("");
    let spaced = no_fragment.replace('_', " ");
    let collapsed = spaced.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut chars = collapsed.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Visible text of a label: no tags, no bold/italic quotes, single spaces.
fn clean_anchor(label: &str) -> String {
    let stripped = strip_inline(label);
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Every well-formed internal link in document order, as
/// (target, anchor) pairs.
pub fn extract_links(wikitext: &str) -> Vec<(String, String)> {
    let text = preclean(wikitext);
    let mut spans = bracket_spans(&text, b'[', b']');
    spans.sort_unstable();
    spans
        .into_iter()
        .filter_map(|(s, e)| match classify(&text[s + 2..e - 2]) {
            LinkKind::Link { target, anchor } => Some((target, anchor)),
            _ => None,
        })
        .collect()
}

pub fn extract_anchors(source_page_id: u64, wikitext: &str) -> Vec<AnchorLink> {
    extract_links(wikitext)
        .into_iter()
        .enumerate()
        .map(|(i, (target_title, anchor_text))| AnchorLink {
            source_page_id,
            target_title,
            anchor_text,
            position: i as u32,
        })
        .collect()
}

/// Plain text of a revision: templates removed (any depth), links replaced
/// by their anchor text, file and category links removed, comments and HTML
/// tags removed, external links replaced by their labels.
pub fn strip_markup(wikitext: &str) -> String {
    let text = preclean(wikitext);
    let text = remove_spans(&text, &outermost(bracket_spans(&text, b'{', b'}')), |_| String::new());
    let spans = bracket_spans(&text, b'[', b']');
    let mut kinds: Vec<((usize, usize), LinkKind)> =
        spans.into_iter().map(|(s, e)| ((s, e), classify(&text[s + 2..e - 2]))).collect();
    kinds.retain(|(_, k)| *k != LinkKind::Abandoned);
    let keep: Vec<(usize, usize)> = outermost(kinds.iter().map(|(span, _)| *span).collect());
    let lookup: std::collections::HashMap<(usize, usize), &LinkKind> = kinds.iter().map(|(s, k)| (*s, k)).collect();
    let text = remove_spans(&text, &keep, |span| match lookup[&span] {
        LinkKind::Link { anchor, .. } => anchor.clone(),
        LinkKind::Invalid(visible) => visible.clone(),
        LinkKind::Excluded | LinkKind::Abandoned => String::new(),
    });
    strip_inline(&replace_external_links(&text))
}

/// Replaces each span (sorted, disjoint) by `with(span)`, padded with spaces
/// so neighbouring words stay apart.
fn remove_spans(text: &str, spans: &[(usize, usize)], with: impl Fn((usize, usize)) -> String) -> String {
    if spans.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for &(s, e) in spans {
        out.push_str(&text[at..s]);
        let r = with((s, e));
        if !r.is_empty() {
            out.push_str(&r);
        } else {
            out.push(' ');
        }
        at = e;
    }
    out.push_str(&text[at..]);
    out
}

/// `[http://example.org label]` becomes `label`.
fn replace_external_links(text: &str) -> String {
    const SCHEMES: &[&str] = &["http://", "https://", "ftp://", "//", "mailto:"];
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('[') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        let is_url = SCHEMES.iter().any(|s| after.len() >= s.len() && after[..s.len()].eq_ignore_ascii_case(s));
        let close = after.find([']', '\n']).filter(|&c| after.as_bytes()[c] == b']');
        match (is_url, close) {
            (true, Some(c)) => {
                let inner = &after[..c];
                if let Some((_, label)) = inner.split_once(' ') {
                    out.push(' ');
                    out.push_str(label);
                    out.push(' ');
                } else {
                    out.push(' ');
                }
                rest = &after[c + 1..];
            }
            _ => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Removes HTML tags, runs of two or more apostrophes, `__MAGIC__` words and
/// character references.
fn strip_inline(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let b = text.as_bytes();
    let mut i = 0;
    let mut plain_from = 0;
    while i < b.len() {
        let skip = match b[i] {
            b'<' => html_tag_len(&b[i..]),
            b'\'' if b.get(i + 1) == Some(&b'\'') => b[i..].iter().take_while(|&&c| c == b'\'').count(),
            b'_' if b.get(i + 1) == Some(&b'_') => magic_word_len(&b[i..]),
            b'&' => entity_len(&b[i..]),
            _ => 0,
        };
        if skip == 0 {
            i += 1;
            continue;
        }
        out.push_str(&text[plain_from..i]);
        if b[i] == b'&' {
            out.push_str(&decode_entity(&text[i..i + skip]));
        } else if b[i] != b'\'' {
            out.push(' ');
        }
        i += skip;
        plain_from = i;
    }
    out.push_str(&text[plain_from..]);
    out
}

fn html_tag_len(b: &[u8]) -> usize {
    let name_at = if b.get(1) == Some(&b'/') { 2 } else { 1 };
    if !b.get(name_at).is_some_and(u8::is_ascii_alphabetic) {
        return 0;
    }
    match b[1..].iter().position(|&c| c == b'>' || c == b'<') {
        Some(p) if b[p + 1] == b'>' => p + 2,
        _ => 0,
    }
}

fn magic_word_len(b: &[u8]) -> usize {
    let body = b[2..].iter().take_while(|c| c.is_ascii_uppercase()).count();
    if body > 0 && b.get(2 + body) == Some(&b'_') && b.get(3 + body) == Some(&b'_') {
        body + 4
    } else {
        0
    }
}

fn entity_len(b: &[u8]) -> usize {
    let body = b[1..].iter().take(10).take_while(|c| c.is_ascii_alphanumeric() || **c == b'#').count();
    if body > 0 && b.get(1 + body) == Some(&b';') {
        body + 2
    } else {
        0
    }
}

fn decode_entity(entity: &str) -> String {
    let name = &entity[1..entity.len() - 1];
    let decoded = match name {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        _ => name.strip_prefix('#').and_then(|n| {
            let code = match n.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok(),
                None => n.parse().ok(),
            };
            code.and_then(char::from_u32)
        }),
    };
    decoded.map_or_else(|| " ".to_string(), |c| c.to_string())
}

/// Tokens of the plain text of a revision.
pub fn extract_fulltext(wikitext: &str) -> Vec<String> {
    crate::text::tokenize(&strip_markup(wikitext))
}
