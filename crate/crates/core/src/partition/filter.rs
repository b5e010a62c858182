use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};

use crate::dump::RevisionRecord;
use crate::time::TimeRange;

/// How entity keys and page titles are brought to a comparable form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    TitleExact,
    TitleCaseFold,
    /// Accepts `https://en.wikipedia.org/wiki/Barack_Obama`, `Barack%20Obama`
    /// and `Barack Obama` as the same key.
    #[default]
    UrlDecode,
}

impl Normalization {
    pub fn normalize(self, key: &str) -> String {
        match self {
            Normalization::TitleExact => key.trim().to_string(),
            Normalization::TitleCaseFold => collapse_spaces(&key.replace('_', " ")).to_lowercase(),
            Normalization::UrlDecode => {
                let key = key.trim();
                let tail = ["/wiki/", "/resource/"]
                    .iter()
                    .filter_map(|p| key.rfind(p).map(|i| &key[i + p.len()..]))
                    .next()
                    .unwrap_or(key);
                let decoded = percent_decode_str(tail).decode_utf8_lossy();
                collapse_spaces(&decoded.replace('_', " "))
            }
        }
    }
}

fn collapse_spaces(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::TitleExact => "title-exact",
            Normalization::TitleCaseFold => "title-case-fold",
            Normalization::UrlDecode => "url-decode",
        })
    }
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "title-exact" | "exact" => Ok(Normalization::TitleExact),
            "title-case-fold" | "casefold" | "case-fold" => Ok(Normalization::TitleCaseFold),
            "url-decode" | "url" => Ok(Normalization::UrlDecode),
            other => Err(format!("unknown normalization {other:?} (expected title-exact, title-case-fold or url-decode)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EntitySetError {
    #[error("i/o error reading entity list: {0}")]
    Io(#[from] std::io::Error),
    #[error("entity list line {line}: expected <key>TAB<id>")]
    BadLine { line: usize },
    #[error("entity list line {line}: key {key:?} collides with an earlier entry after normalization")]
    DuplicateKey { line: usize, key: String },
}

/// Knowledge-base entities to restrict processing to, keyed by normalized
/// title or URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySet {
    entries: HashMap<String, String>,
    normalization: Normalization,
}

impl EntitySet {
    /// Keys that collide after normalization are rejected.
    pub fn new<K: AsRef<str>, V: Into<String>>(
        normalization: Normalization,
        entries: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Self, EntitySetError> {
        let mut map = HashMap::new();
        for (i, (k, v)) in entries.into_iter().enumerate() {
            let key = normalization.normalize(k.as_ref());
            if map.insert(key.clone(), v.into()).is_some() {
                return Err(EntitySetError::DuplicateKey { line: i + 1, key });
            }
        }
        Ok(EntitySet { entries: map, normalization })
    }

    /// Reads `<key>TAB<id>` lines; blank lines and `#` comments are skipped.
    pub fn read(reader: impl BufRead, normalization: Normalization) -> Result<Self, EntitySetError> {
        let mut pairs = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or(EntitySetError::BadLine { line: i + 1 })?;
            if k.trim().is_empty() || v.trim().is_empty() {
                return Err(EntitySetError::BadLine { line: i + 1 });
            }
            pairs.push((k.to_string(), v.trim().to_string()));
            lines.push(i + 1);
        }
        EntitySet::new(normalization, pairs).map_err(|e| match e {
            EntitySetError::DuplicateKey { line, key } => EntitySetError::DuplicateKey { line: lines[line - 1], key },
            other => other,
        })
    }

    pub fn load(path: &Path, normalization: Normalization) -> Result<Self, EntitySetError> {
        let file = std::fs::File::open(path)?;
        EntitySet::read(std::io::BufReader::new(file), normalization)
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, title: &str) -> Option<&str> {
        self.entries.get(&self.normalization.normalize(title)).map(String::as_str)
    }
}

/// The knowledge-base identifier of the record's page, if any. Redirect
/// pages match by their own title only.
pub fn match_entity<'a>(record: &RevisionRecord, entities: &'a EntitySet) -> Option<&'a str> {
    entities.lookup(&record.page.title)
}

/// A named predicate that can be stated on the command line.
#[derive(Clone)]
pub struct CustomPredicate {
    name: String,
    test: Arc<dyn Fn(&RevisionRecord) -> bool + Send + Sync>,
}

impl CustomPredicate {
    pub fn new(name: impl Into<String>, test: impl Fn(&RevisionRecord) -> bool + Send + Sync + 'static) -> Self {
        CustomPredicate { name: name.into(), test: Arc::new(test) }
    }

    pub const BUILTIN: &'static [&'static str] =
        &["not-redirect", "not-deleted", "registered-contributor", "anonymous-contributor"];

    pub fn builtin(name: &str) -> Option<Self> {
        let p = match name {
            "not-redirect" => CustomPredicate::new(name, |r| r.page.redirect_target.is_none()),
            "not-deleted" => CustomPredicate::new(name, |r| !r.deleted),
            "registered-contributor" => {
                CustomPredicate::new(name, |r| r.contributor.as_deref().is_some_and(|c| !is_ip(c)))
            }
            "anonymous-contributor" => {
                CustomPredicate::new(name, |r| r.contributor.as_deref().is_none_or(is_ip))
            }
            _ => return None,
        };
        Some(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn test(&self, record: &RevisionRecord) -> bool {
        (self.test)(record)
    }
}

fn is_ip(s: &str) -> bool {
    s.parse::<std::net::IpAddr>().is_ok()
}

impl fmt::Debug for CustomPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("CustomPredicate").field(&self.name).finish()
    }
}

impl PartialEq for CustomPredicate {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.test, &other.test)
    }
}

/// Conjunction of optional clauses over a revision. An empty spec accepts
/// everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterSpec {
    pub time_range: Option<TimeRange>,
    pub namespaces: Option<BTreeSet<i32>>,
    pub entity_set: Option<Arc<EntitySet>>,
    /// Same as an additional `namespaces = {0}` clause.
    pub articles_only: bool,
    pub custom: Option<CustomPredicate>,
}

impl FilterSpec {
    pub fn is_empty(&self) -> bool {
        self.time_range.is_none()
            && self.namespaces.is_none()
            && self.entity_set.is_none()
            && !self.articles_only
            && self.custom.is_none()
    }

    pub fn summary(&self) -> FilterSummary {
        FilterSummary {
            from: self.time_range.map(|r| r.start().to_iso()),
            to: self.time_range.map(|r| r.end().to_iso()),
            namespaces: self.namespaces.clone(),
            articles_only: self.articles_only,
            entity_set: self.entity_set.as_ref().map(|e| EntitySetSummary {
                entries: e.len(),
                normalization: e.normalization(),
            }),
            custom: self.custom.as_ref().map(|c| c.name().to_string()),
        }
    }
}

/// Serializable description of a [`FilterSpec`], recorded in manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub from: Option<String>,
    pub to: Option<String>,
    pub namespaces: Option<BTreeSet<i32>>,
    pub articles_only: bool,
    pub entity_set: Option<EntitySetSummary>,
    pub custom: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySetSummary {
    pub entries: usize,
    pub normalization: Normalization,
}

pub fn apply_filter(record: &RevisionRecord, filter: &FilterSpec) -> bool {
    let ns = record.page.namespace;
    filter.time_range.is_none_or(|r| r.contains(record.timestamp))
        && (!filter.articles_only || ns == 0)
        && filter.namespaces.as_ref().is_none_or(|set| set.contains(&ns))
        && filter.custom.as_ref().is_none_or(|c| c.test(record))
        && filter.entity_set.as_ref().is_none_or(|set| match_entity(record, set).is_some())
}
