//! Operator chains and their textual form.
//!
//! Grammar (operators separated by `;`, arguments by `,`):
//!
//! ```text
//! filter:from=2012-05-01,to=2012-06-01,ns=0|1,articles-only,entities=PATH,norm=url,custom=not-redirect
//! project:fulltext
//! sample:rate=0.5,seed=7
//! ```
//!
//! `from`/`to` take a date or a full timestamp; either may be omitted. A
//! chain without `project` projects metadata.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use crate::dump::RevisionRecord;
use crate::hash::unit_interval;
use crate::partition::{apply_filter, CustomPredicate, EntitySet, FilterSpec, Normalization};
use crate::time::{parse_instant, TimeRange, Timestamp};

use super::record::{RecordKind, UnknownKind};

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("empty operator {0:?}")]
    Empty(String),
    #[error("unknown operator {0:?} (expected filter, project or sample)")]
    UnknownOperator(String),
    #[error(transparent)]
    UnknownKind(#[from] UnknownKind),
    #[error("more than one project operator")]
    DuplicateProject,
    #[error("bad argument {arg:?} for {op}: {message}")]
    BadArgument { op: &'static str, arg: String, message: String },
    #[error("cannot load entity list {path}: {source}")]
    EntityList { path: PathBuf, source: crate::partition::EntitySetError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Filter(FilterSpec),
    Project(RecordKind),
    Sample { rate: f64, seed: u64 },
}

/// Ordered filter/project/sample operators. Filters and samples are
/// predicates on the source revision, so they all run before any payload is
/// built regardless of where they appear.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorChain {
    operators: Vec<Operator>,
}

/// Why a revision did not survive a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Filtered,
    Sampled,
}

const OPEN_START: &str = "0001-01-01T00:00:00Z";
const OPEN_END: &str = "9999-12-31T23:59:59Z";

impl OperatorChain {
    pub fn new(operators: Vec<Operator>) -> Result<Self, ChainError> {
        let projects = operators.iter().filter(|o| matches!(o, Operator::Project(_))).count();
        if projects > 1 {
            return Err(ChainError::DuplicateProject);
        }
        for op in &operators {
            if let Operator::Sample { rate, .. } = op {
                if !(*rate > 0.0 && *rate <= 1.0) {
                    return Err(ChainError::BadArgument { op: "sample", arg: rate.to_string(), message: "rate must be in (0, 1]".into() });
                }
            }
        }
        Ok(OperatorChain { operators })
    }

    pub fn project(kind: RecordKind) -> Self {
        OperatorChain { operators: vec![Operator::Project(kind)] }
    }

    /// Parses the chain grammar; `sample` without `seed` uses `default_seed`.
    pub fn parse(text: &str, default_seed: u64) -> Result<Self, ChainError> {
        let mut ops = Vec::new();
        for raw in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, args) = raw.split_once(':').unwrap_or((raw, ""));
            let args: Vec<&str> = args.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            let op = match name.trim() {
                "filter" => Operator::Filter(parse_filter(&args)?),
                "project" => match args.as_slice() {
                    [kind] => Operator::Project(kind.parse()?),
                    _ => return Err(ChainError::Empty(raw.to_string())),
                },
                "sample" => parse_sample(&args, default_seed)?,
                other => return Err(ChainError::UnknownOperator(other.to_string())),
            };
            ops.push(op);
        }
        OperatorChain::new(ops)
    }

    pub fn operators(&self) -> &[Operator] {
        &self.operators
    }

    pub fn kind(&self) -> RecordKind {
        self.operators
            .iter()
            .find_map(|o| match o {
                Operator::Project(k) => Some(*k),
                _ => None,
            })
            .unwrap_or(RecordKind::Metadata)
    }

    pub fn filters(&self) -> impl Iterator<Item = &FilterSpec> {
        self.operators.iter().filter_map(|o| match o {
            Operator::Filter(f) => Some(f),
            _ => None,
        })
    }

    /// Filters are checked before samples so drop counters do not depend on
    /// operator order.
    pub fn verdict(&self, record: &RevisionRecord) -> Verdict {
        if !self.filters().all(|f| apply_filter(record, f)) {
            return Verdict::Filtered;
        }
        for op in &self.operators {
            if let Operator::Sample { rate, seed } = op {
                if unit_interval(*seed, record.revision_id) >= *rate {
                    return Verdict::Sampled;
                }
            }
        }
        Verdict::Keep
    }

    /// Knowledge-base id of the record's page under the first filter that
    /// carries an entity set.
    pub fn kb_id(&self, record: &RevisionRecord) -> Option<String> {
        self.filters()
            .find_map(|f| f.entity_set.as_ref())
            .and_then(|set| crate::partition::match_entity(record, set).map(str::to_string))
    }
}

impl fmt::Display for OperatorChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.operators.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            match op {
                Operator::Project(k) => write!(f, "project:{k}")?,
                Operator::Sample { rate, seed } => write!(f, "sample:rate={rate},seed={seed}")?,
                Operator::Filter(spec) => {
                    let mut args = Vec::new();
                    if let Some(r) = spec.time_range {
                        args.push(format!("from={},to={}", r.start(), r.end()));
                    }
                    if let Some(ns) = &spec.namespaces {
                        args.push(format!("ns={}", ns.iter().map(i32::to_string).collect::<Vec<_>>().join("|")));
                    }
                    if spec.articles_only {
                        args.push("articles-only".into());
                    }
                    if let Some(e) = &spec.entity_set {
                        args.push(format!("entities=<{} entries>,norm={}", e.len(), e.normalization()));
                    }
                    if let Some(c) = &spec.custom {
                        args.push(format!("custom={}", c.name()));
                    }
                    write!(f, "filter:{}", args.join(","))?;
                }
            }
        }
        Ok(())
    }
}

fn bad(op: &'static str, arg: &str, message: impl Into<String>) -> ChainError {
    ChainError::BadArgument { op, arg: arg.to_string(), message: message.into() }
}

fn parse_filter(args: &[&str]) -> Result<FilterSpec, ChainError> {
    let mut spec = FilterSpec::default();
    let (mut from, mut to) = (None, None);
    let mut entities = None;
    let mut norm = Normalization::default();
    for &arg in args {
        let (k, v) = arg.split_once('=').map_or((arg, None), |(k, v)| (k.trim(), Some(v.trim())));
        let value = || v.ok_or_else(|| bad("filter", arg, "missing value"));
        match k {
            "from" => from = Some(parse_instant(value()?).map_err(|e| bad("filter", arg, e.to_string()))?),
            "to" => to = Some(parse_instant(value()?).map_err(|e| bad("filter", arg, e.to_string()))?),
            "ns" => {
                let set: Result<BTreeSet<i32>, _> = value()?.split(['|', '+']).map(|n| n.trim().parse::<i32>()).collect();
                spec.namespaces = Some(set.map_err(|e| bad("filter", arg, e.to_string()))?);
            }
            "articles-only" => spec.articles_only = true,
            "entities" => entities = Some(PathBuf::from(value()?)),
            "norm" => norm = value()?.parse().map_err(|e: String| bad("filter", arg, e))?,
            "custom" => {
                let name = value()?;
                spec.custom = Some(CustomPredicate::builtin(name).ok_or_else(|| {
                    bad("filter", arg, format!("unknown predicate; known: {}", CustomPredicate::BUILTIN.join(", ")))
                })?);
            }
            _ => return Err(bad("filter", arg, "unknown filter clause")),
        }
    }
    if from.is_some() || to.is_some() {
        let start = from.unwrap_or_else(|| Timestamp::parse_iso(OPEN_START).expect("valid"));
        let end = to.unwrap_or_else(|| Timestamp::parse_iso(OPEN_END).expect("valid"));
        spec.time_range = Some(TimeRange::new(start, end).map_err(|e| bad("filter", "from/to", e.to_string()))?);
    }
    if let Some(path) = entities {
        let set = EntitySet::load(&path, norm).map_err(|source| ChainError::EntityList { path, source })?;
        spec.entity_set = Some(Arc::new(set));
    }
    Ok(spec)
}

fn parse_sample(args: &[&str], default_seed: u64) -> Result<Operator, ChainError> {
    let mut rate = None;
    let mut seed = default_seed;
    for &arg in args {
        match arg.split_once('=') {
            Some(("rate", v)) => rate = Some(v.trim().parse::<f64>().map_err(|e| bad("sample", arg, e.to_string()))?),
            Some(("seed", v)) => seed = v.trim().parse().map_err(|e: std::num::ParseIntError| bad("sample", arg, e.to_string()))?,
            // A bare number is the rate.
            None if arg.parse::<f64>().is_ok() => rate = arg.parse().ok(),
            _ => return Err(bad("sample", arg, "expected rate=R or seed=S")),
        }
    }
    let rate = rate.ok_or_else(|| bad("sample", "", "missing rate"))?;
    Ok(Operator::Sample { rate, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_example() {
        let chain = OperatorChain::parse("filter:from=2012-05-01,to=2012-06-01;project:fulltext", 0).unwrap();
        assert_eq!(chain.kind(), RecordKind::Fulltext);
        let f = chain.filters().next().unwrap();
        assert_eq!(f.time_range.unwrap().start().to_iso(), "2012-05-01T00:00:00Z");
        assert_eq!(f.time_range.unwrap().end().to_iso(), "2012-06-01T00:00:00Z");
    }

    #[test]
    fn default_projection_is_metadata() {
        assert_eq!(OperatorChain::parse("", 0).unwrap().kind(), RecordKind::Metadata);
        assert_eq!(OperatorChain::parse("sample:rate=0.5", 3).unwrap().operators(), &[Operator::Sample { rate: 0.5, seed: 3 }]);
    }

    #[test]
    fn rejections() {
        assert!(matches!(OperatorChain::parse("project:links", 0), Err(ChainError::UnknownKind(_))));
        assert!(matches!(OperatorChain::parse("project:fulltext;project:anchors", 0), Err(ChainError::DuplicateProject)));
        assert!(matches!(OperatorChain::parse("sample:rate=0", 0), Err(ChainError::BadArgument { .. })));
        assert!(matches!(OperatorChain::parse("sample:rate=1.5", 0), Err(ChainError::BadArgument { .. })));
        assert!(matches!(OperatorChain::parse("explode:now", 0), Err(ChainError::UnknownOperator(_))));
        assert!(OperatorChain::parse("filter:from=2012-06-01,to=2012-05-01", 0).is_err());
        assert!(OperatorChain::parse("filter:custom=nope", 0).is_err());
    }

    #[test]
    fn open_ended_ranges() {
        let chain = OperatorChain::parse("filter:from=2012-05-01,ns=0|14", 0).unwrap();
        let f = chain.filters().next().unwrap();
        assert_eq!(f.namespaces.as_ref().unwrap().len(), 2);
        assert_eq!(f.time_range.unwrap().end().to_iso(), OPEN_END);
    }
}
