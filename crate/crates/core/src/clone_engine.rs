//! Line-based near-miss clone detection.
//!
//! Two normalized fragments are compared by the longest common subsequence of
//! their lines (compared by digest). Similarity is `|LCS| / max(|a|, |b|)` and
//! a pair is a clone when `1 - similarity <= max_difference`, boundary
//! inclusive. Thresholds are kept in basis points so that boundary is exact.

use std::collections::BTreeMap;
use std::fmt;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::short_id;
use crate::error::{Error, Result};
use crate::normalize::{NormalizedFragment, RenamingMode};

/// Upper end of the supported difference range (30%).
pub const MAX_DIFFERENCE_BP: u32 = 3000;
const BP_SCALE: u64 = 10_000;

/// Identity of a fragment across the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FragmentRef {
    pub contract_id: String,
    pub name: String,
    pub start_line: u32,
    pub end_line: u32,
}

impl Ord for FragmentRef {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.contract_id, self.start_line, self.end_line, &self.name).cmp(&(
            &other.contract_id,
            other.start_line,
            other.end_line,
            &other.name,
        ))
    }
}

impl PartialOrd for FragmentRef {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FragmentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}",
            self.contract_id, self.start_line, self.end_line, self.name
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCloneConfig", into = "RawCloneConfig")]
pub struct CloneConfig {
    mode: RenamingMode,
    max_difference_bp: u32,
    min_lines: usize,
    max_lines: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawCloneConfig {
    mode: RenamingMode,
    max_difference: f64,
    min_lines: usize,
    #[serde(default)]
    max_lines: Option<usize>,
}

impl TryFrom<RawCloneConfig> for CloneConfig {
    type Error = Error;

    fn try_from(raw: RawCloneConfig) -> Result<Self> {
        CloneConfig::new(raw.mode, raw.max_difference)?
            .with_min_lines(raw.min_lines)?
            .with_max_lines(raw.max_lines)
    }
}

impl From<CloneConfig> for RawCloneConfig {
    fn from(c: CloneConfig) -> Self {
        RawCloneConfig {
            mode: c.mode,
            max_difference: c.max_difference(),
            min_lines: c.min_lines,
            max_lines: c.max_lines,
        }
    }
}

impl CloneConfig {
    pub const DEFAULT_MIN_LINES: usize = 3;

    /// `max_difference` is a fraction in `[0.0, 0.30]`.
    pub fn new(mode: RenamingMode, max_difference: f64) -> Result<Self> {
        if !(0.0..=0.30 + 1e-9).contains(&max_difference) {
            return Err(Error::InvalidConfig(format!(
                "max_difference {max_difference} outside [0, 0.30]"
            )));
        }
        Ok(CloneConfig {
            mode,
            max_difference_bp: ((max_difference * BP_SCALE as f64).round() as u32)
                .min(MAX_DIFFERENCE_BP),
            min_lines: Self::DEFAULT_MIN_LINES,
            max_lines: None,
        })
    }

    /// Threshold in whole percent, `0..=30`.
    pub fn from_percent(mode: RenamingMode, percent: u32) -> Result<Self> {
        if percent > 30 {
            return Err(Error::InvalidConfig(format!(
                "threshold {percent}% outside 0..=30"
            )));
        }
        Ok(CloneConfig {
            mode,
            max_difference_bp: percent * 100,
            min_lines: Self::DEFAULT_MIN_LINES,
            max_lines: None,
        })
    }

    pub fn with_min_lines(mut self, min_lines: usize) -> Result<Self> {
        if min_lines == 0 {
            return Err(Error::InvalidConfig("min_lines must be at least 1".into()));
        }
        if self.max_lines.is_some_and(|max| max < min_lines) {
            return Err(Error::InvalidConfig("max_lines below min_lines".into()));
        }
        self.min_lines = min_lines;
        Ok(self)
    }

    pub fn with_max_lines(mut self, max_lines: Option<usize>) -> Result<Self> {
        if max_lines.is_some_and(|max| max < self.min_lines) {
            return Err(Error::InvalidConfig("max_lines below min_lines".into()));
        }
        self.max_lines = max_lines;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: RenamingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> RenamingMode {
        self.mode
    }

    pub fn max_difference(&self) -> f64 {
        self.max_difference_bp as f64 / BP_SCALE as f64
    }

    pub fn max_difference_bp(&self) -> u32 {
        self.max_difference_bp
    }

    pub fn min_lines(&self) -> usize {
        self.min_lines
    }

    pub fn max_lines(&self) -> Option<usize> {
        self.max_lines
    }

    pub fn admits_size(&self, lines: usize) -> bool {
        lines >= self.min_lines && self.max_lines.is_none_or(|max| lines <= max)
    }

    /// Whether an LCS of `lcs` lines against a longer side of `max_len`
    /// lines stays within the threshold.
    pub fn accepts(&self, lcs: usize, max_len: usize) -> bool {
        let diff = (max_len - lcs) as u64;
        diff * BP_SCALE <= self.max_difference_bp as u64 * max_len as u64
    }

    /// Necessary condition on lengths alone; `false` means no LCS can pass.
    pub fn lengths_compatible(&self, a: usize, b: usize) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        lo as u64 * BP_SCALE >= (BP_SCALE - self.max_difference_bp as u64) * hi as u64
    }

    /// Stable digest of the configuration, used to validate caches.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        short_id([json.as_str(), crate::cache::NORMALIZATION_VERSION])
    }
}

/// Length of the longest common subsequence of `a` and `b`.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; inner.len() + 1];
    let mut cur = vec![0usize; inner.len() + 1];
    for x in outer {
        for (j, y) in inner.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[inner.len()]
}

/// One row of an LCS alignment: a matched line pair, or a line present on
/// only one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignedLine {
    Both(usize, usize),
    Left(usize),
    Right(usize),
}

/// Full LCS alignment of two sequences (for display).
pub fn lcs_alignment<T: PartialEq>(a: &[T], b: &[T]) -> Vec<AlignedLine> {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(n.max(m));
    while i < n && j < m {
        if a[i] == b[j] {
            out.push(AlignedLine::Both(i, j));
            i += 1;
            j += 1;
        } else if table[i + 1][j] >= table[i][j + 1] {
            out.push(AlignedLine::Left(i));
            i += 1;
        } else {
            out.push(AlignedLine::Right(j));
            j += 1;
        }
    }
    out.extend((i..n).map(AlignedLine::Left));
    out.extend((j..m).map(AlignedLine::Right));
    out
}

/// `|LCS(a, b)| / max(|a|, |b|)`.
pub fn similarity<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyFragment);
    }
    Ok(lcs_len(a, b) as f64 / a.len().max(b.len()) as f64)
}

/// Compares two normalized fragments under `cfg`, returning the similarity
/// when they form a clone pair.
pub fn compare(a: &NormalizedFragment, b: &NormalizedFragment, cfg: &CloneConfig) -> Option<f64> {
    if a.is_empty() || b.is_empty() || !cfg.lengths_compatible(a.len(), b.len()) {
        return None;
    }
    let lcs = lcs_len(&a.line_digests, &b.line_digests);
    let max_len = a.len().max(b.len());
    cfg.accepts(lcs, max_len).then(|| lcs as f64 / max_len as f64)
}

pub fn is_clone_pair(
    a: &NormalizedFragment,
    b: &NormalizedFragment,
    cfg: &CloneConfig,
) -> Result<bool> {
    for nf in [a, b] {
        if nf.mode != cfg.mode {
            return Err(Error::ModeMismatch {
                expected: cfg.mode,
                found: nf.mode,
            });
        }
    }
    if a.origin == b.origin || !cfg.admits_size(a.len()) || !cfg.admits_size(b.len()) {
        return Ok(false);
    }
    Ok(compare(a, b, cfg).is_some())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClonePair {
    pub left: FragmentRef,
    pub right: FragmentRef,
    pub similarity: f64,
}

impl ClonePair {
    /// Builds a pair with `left < right`.
    pub fn new(a: FragmentRef, b: FragmentRef, similarity: f64) -> Self {
        if a <= b {
            ClonePair { left: a, right: b, similarity }
        } else {
            ClonePair { left: b, right: a, similarity }
        }
    }

    pub fn key(&self) -> (&FragmentRef, &FragmentRef) {
        (&self.left, &self.right)
    }
}

/// All clone pairs among `fragments`, in canonical order.
pub fn detect_pairs(fragments: &[NormalizedFragment], cfg: &CloneConfig) -> Result<Vec<ClonePair>> {
    if let Some(bad) = fragments.iter().find(|f| f.mode != cfg.mode) {
        return Err(Error::ModeMismatch {
            expected: cfg.mode,
            found: bad.mode,
        });
    }
    let mut eligible: Vec<&NormalizedFragment> =
        fragments.iter().filter(|f| cfg.admits_size(f.len())).collect();
    eligible.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.origin.cmp(&b.origin)));

    let pairs_from = |i: usize| -> Vec<ClonePair> {
        let a = eligible[i];
        let mut out = Vec::new();
        for b in &eligible[i + 1..] {
            if !cfg.lengths_compatible(a.len(), b.len()) {
                // Sorted by length: every later fragment is longer still.
                break;
            }
            if a.origin == b.origin {
                continue;
            }
            if let Some(sim) = compare(a, b, cfg) {
                out.push(ClonePair::new(a.origin.clone(), b.origin.clone(), sim));
            }
        }
        out
    };

    #[cfg(feature = "parallel")]
    let mut pairs: Vec<ClonePair> = (0..eligible.len()).into_par_iter().flat_map_iter(pairs_from).collect();
    #[cfg(not(feature = "parallel"))]
    let mut pairs: Vec<ClonePair> = (0..eligible.len()).flat_map(pairs_from).collect();

    sort_pairs(&mut pairs);
    Ok(pairs)
}

pub(crate) fn sort_pairs(pairs: &mut Vec<ClonePair>) {
    pairs.sort_by(|x, y| x.key().cmp(&y.key()));
    pairs.dedup_by(|x, y| x.key() == y.key());
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneClass {
    pub class_id: String,
    pub members: Vec<FragmentRef>,
}

/// Connected components of the pair graph, each with at least two members.
pub fn cluster_classes(pairs: &[ClonePair]) -> Vec<CloneClass> {
    connected_components(pairs.iter().map(|p| (p.left.clone(), p.right.clone())))
        .into_iter()
        .map(|members| CloneClass {
            class_id: class_id(members.iter().map(|m| m.to_string())),
            members,
        })
        .collect()
}

/// Deterministic id for a sorted member list.
pub fn class_id(keys: impl IntoIterator<Item = String>) -> String {
    let keys: Vec<String> = keys.into_iter().collect();
    short_id(keys.iter().map(String::as_str))
}

/// Connected components over arbitrary ordered nodes. Components come back
/// sorted internally and ordered by their smallest member.
pub fn connected_components<N: Ord + Clone>(edges: impl IntoIterator<Item = (N, N)>) -> Vec<Vec<N>> {
    let mut index: BTreeMap<N, usize> = BTreeMap::new();
    let mut parent: Vec<usize> = Vec::new();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut intern = |n: N, parent: &mut Vec<usize>| -> usize {
        *index.entry(n).or_insert_with(|| {
            parent.push(parent.len());
            parent.len() - 1
        })
    };

    for (a, b) in edges {
        let ia = intern(a, &mut parent);
        let ib = intern(b, &mut parent);
        let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }

    let mut groups: BTreeMap<usize, Vec<N>> = BTreeMap::new();
    for (node, i) in index {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(node);
    }
    let mut comps: Vec<Vec<N>> = groups.into_values().filter(|g| g.len() >= 2).collect();
    comps.sort();
    comps
}
