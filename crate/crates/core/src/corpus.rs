//! Source corpora: loading, pragma parsing, version bucketing and dedupe.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::extractor::strip_comments;
use crate::warning::Warning;

/// A compiler version requirement reduced to the lowest version it admits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolidityVersion {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
    /// Constraint text as written after `pragma solidity`.
    pub raw_constraint: String,
}

impl SolidityVersion {
    pub fn bucket(&self) -> VersionBucket {
        VersionBucket::Minor {
            major: self.major,
            minor: self.minor,
        }
    }
}

/// Version bucket used to organise a corpus, rendered as `^0.4` etc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum VersionBucket {
    Minor { major: u32, minor: u32 },
    /// Contracts without a `pragma solidity` directive. Sorts last.
    Unknown,
}

impl VersionBucket {
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for VersionBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionBucket::Minor { major, minor } => write!(f, "^{major}.{minor}"),
            VersionBucket::Unknown => f.write_str("unknown"),
        }
    }
}

impl FromStr for VersionBucket {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "unknown" {
            return Ok(VersionBucket::Unknown);
        }
        let rest = s.strip_prefix('^').ok_or_else(|| format!("bad bucket `{s}`"))?;
        let (major, minor) = rest
            .split_once('.')
            .ok_or_else(|| format!("bad bucket `{s}`"))?;
        Ok(VersionBucket::Minor {
            major: major.parse().map_err(|_| format!("bad bucket `{s}`"))?,
            minor: minor.parse().map_err(|_| format!("bad bucket `{s}`"))?,
        })
    }
}

impl From<VersionBucket> for String {
    fn from(b: VersionBucket) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for VersionBucket {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceContract {
    /// File path relative to the corpus root, or a chain address.
    pub id: String,
    pub source_text: String,
    pub content_digest: String,
    pub version: Option<SolidityVersion>,
    /// Where the contract was read from, when it came from disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl SourceContract {
    pub fn new(id: impl Into<String>, source_text: impl Into<String>) -> Self {
        let source_text = source_text.into();
        SourceContract {
            id: id.into(),
            content_digest: sha256_hex(source_text.as_bytes()),
            version: parse_pragma(&source_text),
            source_text,
            path: None,
        }
    }

    pub fn with_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn bucket(&self) -> VersionBucket {
        self.version
            .as_ref()
            .map_or(VersionBucket::Unknown, SolidityVersion::bucket)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub label: String,
    pub contracts: Vec<SourceContract>,
}

impl Corpus {
    pub fn new(label: impl Into<String>, contracts: Vec<SourceContract>) -> Self {
        Corpus {
            label: label.into(),
            contracts,
        }
    }

    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.contracts
            .iter()
            .map(|c| ManifestEntry {
                id: c.id.clone(),
                digest: c.content_digest.clone(),
                version_bucket: c.bucket(),
                path: c.path.clone(),
            })
            .collect()
    }
}

/// One row of the JSON corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub digest: String,
    pub version_bucket: VersionBucket,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    pub warnings: Vec<Warning>,
}

impl LoadOutcome {
    /// Files skipped because they were not valid UTF-8.
    pub fn non_utf8_count(&self) -> usize {
        self.warnings
            .iter()
            .filter(|w| matches!(w, Warning::NonUtf8 { .. }))
            .count()
    }
}

/// Loads every `.sol` file below `root`, ordered by relative path.
pub fn load_corpus(root: &Path, label: &str) -> Result<LoadOutcome> {
    if !root.is_dir() {
        return Err(Error::MissingRoot(root.to_path_buf()));
    }
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file()
            && entry.path().extension().is_some_and(|ext| ext == "sol")
        {
            paths.push(entry.into_path());
        }
    }
    let mut keyed: Vec<(String, PathBuf)> = paths
        .into_iter()
        .map(|p| (relative_id(root, &p), p))
        .collect();
    keyed.sort();

    let mut warnings = Vec::new();
    let mut contracts = Vec::with_capacity(keyed.len());
    for (id, path) in keyed {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        match String::from_utf8(bytes) {
            Ok(text) if text.is_empty() => warnings.push(Warning::EmptyFile { path }),
            Ok(text) => contracts.push(SourceContract::new(id, text).with_path(path)),
            Err(_) => warnings.push(Warning::NonUtf8 { path }),
        }
    }
    if contracts.is_empty() {
        warnings.push(Warning::EmptyCorpus {
            root: root.to_path_buf(),
        });
    }
    Ok(LoadOutcome {
        corpus: Corpus::new(label, contracts),
        warnings,
    })
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Keeps the first contract for each content digest.
pub fn dedupe(corpus: &Corpus) -> Corpus {
    let mut seen = HashSet::new();
    Corpus {
        label: corpus.label.clone(),
        contracts: corpus
            .contracts
            .iter()
            .filter(|c| seen.insert(c.content_digest.clone()))
            .cloned()
            .collect(),
    }
}

/// Splits a corpus into version buckets, preserving order inside each bucket.
pub fn sort_by_version(corpus: &Corpus) -> BTreeMap<VersionBucket, Corpus> {
    let mut buckets: BTreeMap<VersionBucket, Corpus> = BTreeMap::new();
    for contract in &corpus.contracts {
        let bucket = contract.bucket();
        buckets
            .entry(bucket)
            .or_insert_with(|| Corpus::new(format!("{}/{}", corpus.label, bucket), Vec::new()))
            .contracts
            .push(contract.clone());
    }
    buckets
}

/// Version of the first `pragma solidity` directive outside comments.
///
/// Range constraints resolve to the lowest version they admit.
pub fn parse_pragma(source_text: &str) -> Option<SolidityVersion> {
    let visible = strip_comments(source_text);
    let bytes = visible.as_bytes();
    let mut from = 0;
    while let Some(off) = visible[from..].find("pragma") {
        let at = from + off;
        from = at + "pragma".len();
        let boundary_before = at == 0 || !is_ident_byte(bytes[at - 1]);
        if !boundary_before {
            continue;
        }
        let rest = visible[from..].trim_start();
        let Some(after) = rest.strip_prefix("solidity") else {
            continue;
        };
        if after.bytes().next().is_some_and(is_ident_byte) {
            continue;
        }
        let constraint = after.split(';').next().unwrap_or("").trim();
        let (major, minor, patch) = lowest_admitted(constraint)?;
        return Some(SolidityVersion {
            major,
            minor,
            patch,
            raw_constraint: constraint.to_string(),
        });
    }
    None
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

type Triple = (u32, u32, u32);

/// Lowest version satisfying a constraint such as `^0.4.24`,
/// `>=0.5.0 <0.7.0`, `0.4.0 - 0.5.0` or `^0.4.0 || ^0.5.0`.
fn lowest_admitted(constraint: &str) -> Option<Triple> {
    constraint
        .split("||")
        .filter_map(|alt| lower_bound_of_set(alt.trim()))
        .min()
}

/// Lowest version admitted by one space-separated comparator set, or `None`
/// when the set is malformed or admits nothing.
fn lower_bound_of_set(set: &str) -> Option<Triple> {
    if set.is_empty() {
        return None;
    }
    if let Some((lo, hi)) = set.split_once(" - ") {
        let lower = parse_partial(lo.trim())?.floor();
        let upper = parse_partial(hi.trim())?.successor();
        return (lower < upper).then_some(lower);
    }
    let mut lower = (0, 0, 0);
    let mut upper: Option<Triple> = None;
    let mut any = false;
    let mut tokens = set.split_whitespace().peekable();
    while let Some(tok) = tokens.next() {
        // Allow "> = 0.5.0" style spacing by gluing a bare operator to its operand.
        let owned;
        let tok = if tok.chars().all(|c| "<>=^~".contains(c)) {
            owned = format!("{tok}{}", tokens.next()?);
            owned.as_str()
        } else {
            tok
        };
        let split = tok
            .find(|c: char| c.is_ascii_digit() || c == 'x' || c == 'X' || c == '*')
            .unwrap_or(tok.len());
        let (op, ver) = tok.split_at(split);
        let ver = parse_partial(ver.trim_start_matches('v'))?;
        let (lo, hi) = match op {
            "" | "=" => (Some(ver.floor()), Some(ver.successor())),
            "^" => (Some(ver.floor()), Some(ver.caret_ceiling())),
            "~" => (Some(ver.floor()), Some(ver.tilde_ceiling())),
            ">=" => (Some(ver.floor()), None),
            ">" => (Some(ver.successor()), None),
            "<" => (None, Some(ver.floor())),
            "<=" => (None, Some(ver.successor())),
            _ => return None,
        };
        any = true;
        if let Some(b) = lo {
            lower = lower.max(b);
        }
        if let Some(b) = hi {
            upper = Some(upper.map_or(b, |u| u.min(b)));
        }
    }
    (any && upper.is_none_or(|u| lower < u)).then_some(lower)
}

/// A possibly partial version such as `0.4` or `0.4.x`.
#[derive(Debug, Clone, Copy)]
struct Partial {
    parts: [Option<u32>; 3],
}

impl Partial {
    fn floor(self) -> Triple {
        let [a, b, c] = self.parts;
        (a.unwrap_or(0), b.unwrap_or(0), c.unwrap_or(0))
    }

    /// Smallest version strictly greater than every version this partial names.
    fn successor(self) -> Triple {
        match self.parts {
            [Some(a), Some(b), Some(c)] => (a, b, c + 1),
            [Some(a), Some(b), None] => (a, b + 1, 0),
            [Some(a), None, _] => (a + 1, 0, 0),
            _ => (u32::MAX, 0, 0),
        }
    }

    /// Exclusive upper bound of `^self`.
    fn caret_ceiling(self) -> Triple {
        match self.parts {
            [Some(a), _, _] if a > 0 => (a + 1, 0, 0),
            [Some(a), Some(b), _] if b > 0 => (a, b + 1, 0),
            [Some(a), Some(b), Some(c)] => (a, b, c + 1),
            [Some(a), Some(_), None] => (a, 1, 0),
            [a, None, _] => (a.unwrap_or(0) + 1, 0, 0),
            [None, ..] => (u32::MAX, 0, 0),
        }
    }

    /// Exclusive upper bound of `~self`.
    fn tilde_ceiling(self) -> Triple {
        match self.parts {
            [Some(a), Some(b), _] => (a, b + 1, 0),
            [Some(a), None, _] => (a + 1, 0, 0),
            _ => (u32::MAX, 0, 0),
        }
    }
}

fn parse_partial(text: &str) -> Option<Partial> {
    let core = text.split(['-', '+']).next()?;
    let mut parts = [None; 3];
    let mut count = 0;
    for (i, piece) in core.split('.').enumerate() {
        if i >= 3 {
            return None;
        }
        count += 1;
        parts[i] = match piece {
            "x" | "X" | "*" => None,
            digits => Some(digits.parse().ok()?),
        };
    }
    (count > 0 && parts[0].is_some()).then_some(Partial { parts })
}
