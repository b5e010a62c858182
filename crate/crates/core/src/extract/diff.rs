use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::wikitext::extract_fulltext;

/// Inputs longer than this skip the alignment and only get multiset counts.
pub const LCS_MAX_TOKENS: usize = 50_000;
const LCS_DEADLINE: Duration = Duration::from_secs(2);

/// Token-level change between a revision and its parent.
///
/// `parent − removed_terms + inserted_terms = child` as multisets, and
/// `unchanged_count = |parent ∩ child|`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionDelta {
    pub revision_id: u64,
    pub parent_id: Option<u64>,
    pub inserted_terms: BTreeMap<String, u32>,
    pub removed_terms: BTreeMap<String, u32>,
    pub unchanged_count: u64,
    /// Length of the longest common token subsequence; at most
    /// `unchanged_count`, smaller when tokens moved. Absent for inputs over
    /// [`LCS_MAX_TOKENS`] or without a parent.
    pub aligned_count: Option<u64>,
    /// False when the revision names a parent whose text was unavailable.
    pub parent_found: bool,
}

/// Multiset delta plus (for inputs up to [`LCS_MAX_TOKENS`]) the exact LCS
/// length.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenDelta {
    pub inserted: BTreeMap<String, u32>,
    pub removed: BTreeMap<String, u32>,
    pub unchanged: u64,
    pub aligned: Option<u64>,
}

fn counts(tokens: &[String]) -> HashMap<&str, u32> {
    let mut m: HashMap<&str, u32> = HashMap::with_capacity(tokens.len());
    for t in tokens {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

pub fn diff_tokens(parent: &[String], child: &[String]) -> TokenDelta {
    let p = counts(parent);
    let c = counts(child);
    let mut delta = TokenDelta::default();
    for (t, &np) in &p {
        let nc = c.get(t).copied().unwrap_or(0);
        delta.unchanged += u64::from(np.min(nc));
        if np > nc {
            delta.removed.insert(t.to_string(), np - nc);
        }
    }
    for (t, &nc) in &c {
        let np = p.get(t).copied().unwrap_or(0);
        if nc > np {
            delta.inserted.insert(t.to_string(), nc - np);
        }
    }
    if parent.len().max(child.len()) <= LCS_MAX_TOKENS {
        delta.aligned = lcs_len(parent, child, &p, &c);
    }
    delta
}

struct EqualRuns(u64);

impl similar::algorithms::DiffHook for EqualRuns {
    type Error = std::convert::Infallible;

    fn equal(&mut self, _old: usize, _new: usize, len: usize) -> Result<(), Self::Error> {
        self.0 += len as u64;
        Ok(())
    }
}

/// Exact LCS length. Tokens that occur on one side only cannot be part of
/// it and are removed first, which keeps unrelated texts cheap.
fn lcs_len(parent: &[String], child: &[String], p: &HashMap<&str, u32>, c: &HashMap<&str, u32>) -> Option<u64> {
    fn intern<'a>(ids: &mut HashMap<&'a str, u32>, t: &'a str) -> u32 {
        let n = ids.len() as u32;
        *ids.entry(t).or_insert(n)
    }
    let mut ids = HashMap::new();
    let old: Vec<u32> = parent.iter().filter(|t| c.contains_key(t.as_str())).map(|t| intern(&mut ids, t)).collect();
    let new: Vec<u32> = child.iter().filter(|t| p.contains_key(t.as_str())).map(|t| intern(&mut ids, t)).collect();
    let mut hook = EqualRuns(0);
    let start = Instant::now();
    let deadline = start + LCS_DEADLINE;
    similar::algorithms::myers::diff_deadline_raw(&mut hook, &old, 0..old.len(), &new, 0..new.len(), Some(deadline))
        .unwrap_or_else(|never| match never {});
    // A diff that hit the deadline is not minimal.
    (Instant::now() < deadline).then_some(hook.0)
}

/// Delta between two wikitexts over their fulltext tokens.
pub fn diff_revisions(parent_text: &str, child_text: &str) -> TokenDelta {
    diff_tokens(&extract_fulltext(parent_text), &extract_fulltext(child_text))
}

impl RevisionDelta {
    /// `parent_text` is `None` when the revision has no parent or the parent
    /// is unavailable; every child token then counts as inserted.
    pub fn build(revision_id: u64, parent_id: Option<u64>, parent_text: Option<&str>, child_text: &str) -> Self {
        let child = extract_fulltext(child_text);
        match parent_text {
            Some(pt) => {
                let d = diff_tokens(&extract_fulltext(pt), &child);
                RevisionDelta {
                    revision_id,
                    parent_id,
                    inserted_terms: d.inserted,
                    removed_terms: d.removed,
                    unchanged_count: d.unchanged,
                    aligned_count: d.aligned,
                    parent_found: true,
                }
            }
            None => {
                let mut inserted: BTreeMap<String, u32> = BTreeMap::new();
                for t in child {
                    *inserted.entry(t).or_default() += 1;
                }
                RevisionDelta {
                    revision_id,
                    parent_id,
                    inserted_terms: inserted,
                    removed_terms: BTreeMap::new(),
                    unchanged_count: 0,
                    aligned_count: None,
                    parent_found: parent_id.is_none(),
                }
            }
        }
    }
}
