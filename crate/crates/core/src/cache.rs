//! Within-corpus clone analysis with an on-disk cache for incremental runs.
//!
//! The cache holds, per contract, its content digest and normalized fragments
//! in the configured mode, plus every clone pair found so far. An incremental
//! run re-normalizes only contracts whose digest changed and only compares
//! fragments that touch those contracts; pairs among unchanged fragments are
//! carried over.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clone_engine::{cluster_classes, compare, detect_pairs, sort_pairs, CloneClass, CloneConfig, ClonePair};
use crate::corpus::{Corpus, SourceContract};
use crate::error::{Error, Result};
use crate::extractor::extract_functions;
use crate::normalize::{normalize, NormalizedFragment};
use crate::warning::Warning;

/// Bumped whenever extraction or normalization output changes shape.
pub const NORMALIZATION_VERSION: &str = "volcano-normalize-1";
pub const CACHE_FORMAT_VERSION: u32 = 1;
pub const CACHE_DIR: &str = ".volcano-cache";
const CACHE_FILE: &str = "clones.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneReport {
    pub config: CloneConfig,
    pub pairs: Vec<ClonePair>,
    pub classes: Vec<CloneClass>,
}

impl CloneReport {
    fn from_pairs(config: CloneConfig, pairs: Vec<ClonePair>) -> Self {
        let classes = cluster_classes(&pairs);
        CloneReport { config, pairs, classes }
    }

    /// Canonical JSON; equal reports serialize to identical bytes.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedContract {
    pub content_digest: String,
    pub fragments: Vec<NormalizedFragment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisCache {
    pub format_version: u32,
    pub config_digest: String,
    pub config: CloneConfig,
    pub contracts: BTreeMap<String, CachedContract>,
    pub pairs: Vec<ClonePair>,
}

/// Contracts added or modified (by id) and ids removed since the cached run.
#[derive(Debug, Clone, Default)]
pub struct ChangeSet {
    pub upserted: Vec<SourceContract>,
    pub removed: Vec<String>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.upserted.is_empty() && self.removed.is_empty()
    }

    /// Difference between what `cache` holds and the full current `corpus`.
    pub fn between(cache: &AnalysisCache, corpus: &Corpus) -> ChangeSet {
        let current: BTreeSet<&str> = corpus.contracts.iter().map(|c| c.id.as_str()).collect();
        ChangeSet {
            upserted: corpus
                .contracts
                .iter()
                .filter(|c| {
                    cache
                        .contracts
                        .get(&c.id)
                        .is_none_or(|cached| cached.content_digest != c.content_digest)
                })
                .cloned()
                .collect(),
            removed: cache
                .contracts
                .keys()
                .filter(|id| !current.contains(id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

fn normalize_contract(contract: &SourceContract, cfg: &CloneConfig) -> CachedContract {
    let fragments = extract_functions(contract)
        .fragments
        .iter()
        .map(|f| normalize(f, cfg.mode()))
        .collect();
    CachedContract {
        content_digest: contract.content_digest.clone(),
        fragments,
    }
}

fn normalize_all(contracts: &[SourceContract], cfg: &CloneConfig) -> Vec<(String, CachedContract)> {
    let work = |c: &SourceContract| (c.id.clone(), normalize_contract(c, cfg));
    #[cfg(feature = "parallel")]
    let out = contracts.par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let out = contracts.iter().map(work).collect();
    out
}

/// From-scratch analysis of `corpus`.
pub fn analyze_corpus(corpus: &Corpus, cfg: &CloneConfig) -> Result<(CloneReport, AnalysisCache)> {
    let contracts: BTreeMap<String, CachedContract> = normalize_all(&corpus.contracts, cfg).into_iter().collect();
    let all: Vec<NormalizedFragment> = contracts
        .values()
        .flat_map(|c| c.fragments.iter().cloned())
        .collect();
    let pairs = detect_pairs(&all, cfg)?;
    let cache = AnalysisCache {
        format_version: CACHE_FORMAT_VERSION,
        config_digest: cfg.digest(),
        config: *cfg,
        contracts,
        pairs: pairs.clone(),
    };
    Ok((CloneReport::from_pairs(*cfg, pairs), cache))
}

/// Applies `changes` on top of `cache`. The result equals [`analyze_corpus`]
/// over the updated corpus.
pub fn incremental_scan(
    cache: &AnalysisCache,
    changes: &ChangeSet,
    cfg: &CloneConfig,
) -> Result<(CloneReport, AnalysisCache)> {
    let current = cfg.digest();
    if cache.config_digest != current || cache.format_version != CACHE_FORMAT_VERSION {
        return Err(Error::CacheConfigMismatch {
            cached: cache.config_digest.clone(),
            current,
        });
    }

    let mut next = cache.clone();
    let touched: BTreeSet<&str> = changes
        .removed
        .iter()
        .map(String::as_str)
        .chain(changes.upserted.iter().map(|c| c.id.as_str()))
        .collect();
    for id in &touched {
        next.contracts.remove(*id);
    }
    next.pairs
        .retain(|p| !touched.contains(p.left.contract_id.as_str()) && !touched.contains(p.right.contract_id.as_str()));

    let fresh = normalize_all(&changes.upserted, cfg);
    let fresh_ids: BTreeSet<String> = fresh.iter().map(|(id, _)| id.clone()).collect();
    next.contracts.extend(fresh);

    // Every pair with at least one side in a fresh contract.
    let new_frags: Vec<&NormalizedFragment> = next
        .contracts
        .iter()
        .filter(|(id, _)| fresh_ids.contains(*id))
        .flat_map(|(_, c)| c.fragments.iter())
        .filter(|f| cfg.admits_size(f.len()))
        .collect();
    let all_frags: Vec<&NormalizedFragment> = next
        .contracts
        .values()
        .flat_map(|c| c.fragments.iter())
        .filter(|f| cfg.admits_size(f.len()))
        .collect();

    let pairs_for = |a: &&NormalizedFragment| -> Vec<ClonePair> {
        all_frags
            .iter()
            .filter(|b| {
                b.origin != a.origin
                    // Fresh-fresh pairs are produced once, from the smaller side.
                    && (!fresh_ids.contains(&b.origin.contract_id) || a.origin < b.origin)
            })
            .filter_map(|b| {
                compare(a, b, cfg).map(|sim| ClonePair::new(a.origin.clone(), b.origin.clone(), sim))
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let added: Vec<ClonePair> = new_frags.par_iter().flat_map_iter(pairs_for).collect();
    #[cfg(not(feature = "parallel"))]
    let added: Vec<ClonePair> = new_frags.iter().flat_map(pairs_for).collect();

    next.pairs.extend(added);
    sort_pairs(&mut next.pairs);
    let report = CloneReport::from_pairs(*cfg, next.pairs.clone());
    Ok((report, next))
}

impl AnalysisCache {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(CACHE_FILE)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = Self::path_in(dir);
        let json = serde_json::to_vec(self).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Reads the cache in `dir`. A missing cache is `Ok(None)`; an unreadable
    /// or stale-format one is `Ok(None)` plus a warning.
    pub fn load(dir: &Path) -> Result<(Option<AnalysisCache>, Vec<Warning>)> {
        let path = Self::path_in(dir);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((None, Vec::new())),
            Err(e) => return Err(Error::io(&path, e)),
        };
        match serde_json::from_slice::<AnalysisCache>(&bytes) {
            Ok(cache) if cache.format_version == CACHE_FORMAT_VERSION => Ok((Some(cache), Vec::new())),
            Ok(cache) => Ok((
                None,
                vec![Warning::CacheCorrupt {
                    path,
                    reason: format!("format version {}", cache.format_version),
                }],
            )),
            Err(e) => Ok((
                None,
                vec![Warning::CacheCorrupt {
                    path,
                    reason: e.to_string(),
                }],
            )),
        }
    }

    pub fn clear(dir: &Path) -> Result<bool> {
        match std::fs::remove_dir_all(dir) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(Error::io(dir, e)),
        }
    }
}

#[derive(Debug)]
pub struct CachedRun {
    pub report: CloneReport,
    pub cache: AnalysisCache,
    pub warnings: Vec<Warning>,
    /// Contracts re-normalized in this run.
    pub reanalyzed: usize,
}

/// Runs the clone analysis using the cache in `dir` when it is usable and
/// writes the refreshed cache back.
pub fn run_with_cache(corpus: &Corpus, cfg: &CloneConfig, dir: &Path) -> Result<CachedRun> {
    let (cached, mut warnings) = AnalysisCache::load(dir)?;
    let (report, cache, reanalyzed) = match cached {
        Some(cache) if cache.config_digest == cfg.digest() => {
            let changes = ChangeSet::between(&cache, corpus);
            let n = changes.upserted.len();
            let (report, cache) = incremental_scan(&cache, &changes, cfg)?;
            (report, cache, n)
        }
        other => {
            if other.is_some() {
                warnings.push(Warning::CacheCorrupt {
                    path: AnalysisCache::path_in(dir),
                    reason: "built with a different configuration".into(),
                });
            }
            let (report, cache) = analyze_corpus(corpus, cfg)?;
            (report, cache, corpus.len())
        }
    };
    cache.save(dir)?;
    Ok(CachedRun {
        report,
        cache,
        warnings,
        reanalyzed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::RenamingMode;

    fn contract(id: &str, body: &str) -> SourceContract {
        SourceContract::new(id, format!("contract C {{\n{body}\n}}\n"))
    }

    fn cfg() -> CloneConfig {
        CloneConfig::from_percent(RenamingMode::Consistent, 30).unwrap()
    }

    const F: &str = "function pay(uint a) public {\n  require(a > 0);\n  total += a;\n  emit Paid(a);\n}";

    #[test]
    fn no_change_is_identity() {
        let corpus = Corpus::new("t", vec![contract("a", F), contract("b", F)]);
        let (report, cache) = analyze_corpus(&corpus, &cfg()).unwrap();
        let (again, _) = incremental_scan(&cache, &ChangeSet::default(), &cfg()).unwrap();
        assert_eq!(report.to_canonical_json(), again.to_canonical_json());
        assert_eq!(report.pairs.len(), 1);
    }

    #[test]
    fn added_duplicate_adds_local_pairs() {
        let corpus = Corpus::new("t", vec![contract("a", F), contract("b", F)]);
        let (_, cache) = analyze_corpus(&corpus, &cfg()).unwrap();
        let changes = ChangeSet {
            upserted: vec![contract("c", F)],
            removed: vec![],
        };
        let (report, _) = incremental_scan(&cache, &changes, &cfg()).unwrap();
        assert_eq!(report.pairs.len(), 3);
        let touching_c = report
            .pairs
            .iter()
            .filter(|p| p.left.contract_id == "c" || p.right.contract_id == "c")
            .count();
        assert_eq!(touching_c, 2);
        assert_eq!(report.classes.len(), 1);
    }

    #[test]
    fn config_mismatch() {
        let corpus = Corpus::new("t", vec![contract("a", F)]);
        let (_, cache) = analyze_corpus(&corpus, &cfg()).unwrap();
        let other = CloneConfig::from_percent(RenamingMode::Blind, 0).unwrap();
        assert!(matches!(
            incremental_scan(&cache, &ChangeSet::default(), &other),
            Err(Error::CacheConfigMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_cache_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(AnalysisCache::path_in(dir.path()), b"{not json").unwrap();
        let corpus = Corpus::new("t", vec![contract("a", F), contract("b", F)]);
        let run = run_with_cache(&corpus, &cfg(), dir.path()).unwrap();
        assert!(matches!(run.warnings[..], [Warning::CacheCorrupt { .. }]));
        assert_eq!(run.report.pairs.len(), 1);
        // Second run reuses the freshly written cache.
        let run2 = run_with_cache(&corpus, &cfg(), dir.path()).unwrap();
        assert!(run2.warnings.is_empty());
        assert_eq!(run2.reanalyzed, 0);
        assert_eq!(run2.report, run.report);
        assert!(AnalysisCache::clear(dir.path()).unwrap());
    }
}
