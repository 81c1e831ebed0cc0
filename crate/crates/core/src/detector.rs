//! Cross-corpus detection against a signature set, and per-version evolution
//! statistics.

use std::collections::{BTreeMap, BTreeSet};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::clone_engine::{class_id, compare, connected_components, CloneConfig, FragmentRef};
use crate::corpus::{Corpus, SourceContract, VersionBucket};
use crate::error::{Error, Result};
use crate::extractor::extract_functions;
use crate::normalize::{normalize, RenamingMode};
use crate::signatures::{SignatureSet, VulnSignature, VulnerabilityType};
use crate::warning::Warning;

/// One (signature, target fragment) match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub sig_id: String,
    pub vuln_type: VulnerabilityType,
    pub contract_id: String,
    pub function: String,
    pub start_line: u32,
    pub end_line: u32,
    pub similarity: f64,
    pub mode: RenamingMode,
    pub threshold_used: f64,
    pub solidity_bucket: VersionBucket,
}

impl Detection {
    pub fn target(&self) -> FragmentRef {
        FragmentRef {
            contract_id: self.contract_id.clone(),
            name: self.function.clone(),
            start_line: self.start_line,
            end_line: self.end_line,
        }
    }

    fn sort_key(&self) -> (&str, u32, u32, &str, &str) {
        (&self.contract_id, self.start_line, self.end_line, &self.function, &self.sig_id)
    }
}

/// Clone class spanning at least one signature and one target fragment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossClass {
    pub class_id: String,
    pub signatures: Vec<String>,
    pub vuln_types: Vec<VulnerabilityType>,
    pub fragments: Vec<FragmentRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractTiming {
    pub contract_id: String,
    pub ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    #[serde(rename = "per_contract_ms")]
    pub per_contract: Vec<ContractTiming>,
    pub total_ms: f64,
    /// `None` for an empty corpus.
    pub average_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub config: CloneConfig,
    pub contracts_scanned: usize,
    pub fragments_scanned: usize,
    pub detections: Vec<Detection>,
    pub per_type_instances: BTreeMap<VulnerabilityType, usize>,
    pub classes: Vec<CrossClass>,
    pub timing: Timing,
    #[serde(skip)]
    pub warnings: Vec<Warning>,
}

impl ScanReport {
    /// Report without the timing section; identical inputs give identical bytes.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timing");
        }
        serde_json::to_string_pretty(&value).expect("report serializes")
    }

    /// Detections attributed to `sig_id`.
    pub fn detections_of<'a>(&'a self, sig_id: &'a str) -> impl Iterator<Item = &'a Detection> + 'a {
        self.detections.iter().filter(move |d| d.sig_id == sig_id)
    }
}

struct ContractScan {
    detections: Vec<Detection>,
    fragments: usize,
    timing: ContractTiming,
    warnings: Vec<Warning>,
}

fn scan_contract(contract: &SourceContract, sigs: &[&VulnSignature], cfg: &CloneConfig) -> ContractScan {
    let watch = Stopwatch::start();
    let extraction = extract_functions(contract);
    let bucket = contract.bucket();
    let mut detections = Vec::new();
    let mut fragments = 0;
    for fragment in &extraction.fragments {
        let target = normalize(fragment, cfg.mode());
        if !cfg.admits_size(target.len()) {
            continue;
        }
        fragments += 1;
        for sig in sigs {
            if let Some(similarity) = compare(sig.exemplar_for(cfg.mode()), &target, cfg) {
                detections.push(Detection {
                    sig_id: sig.sig_id.clone(),
                    vuln_type: sig.vuln_type,
                    contract_id: contract.id.clone(),
                    function: fragment.name.clone(),
                    start_line: fragment.start_line,
                    end_line: fragment.end_line,
                    similarity,
                    mode: cfg.mode(),
                    threshold_used: cfg.max_difference(),
                    solidity_bucket: bucket,
                });
            }
        }
    }
    ContractScan {
        detections,
        fragments,
        timing: ContractTiming {
            contract_id: contract.id.clone(),
            ms: watch.elapsed().as_secs_f64() * 1000.0,
        },
        warnings: extraction.warnings,
    }
}

/// Matches every fragment of `target` against every signature.
pub fn scan(target: &Corpus, sigs: &SignatureSet, cfg: &CloneConfig) -> Result<ScanReport> {
    if sigs.is_empty() {
        return Err(Error::EmptySignatureSet);
    }
    let watch = Stopwatch::start();
    let active: Vec<&VulnSignature> = sigs.signatures.iter().collect();
    let work = |c: &SourceContract| scan_contract(c, &active, cfg);
    #[cfg(feature = "parallel")]
    let results: Vec<ContractScan> = target.contracts.par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<ContractScan> = target.contracts.iter().map(work).collect();

    let mut detections = Vec::new();
    let mut per_contract = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    let mut fragments_scanned = 0;
    for r in results {
        detections.extend(r.detections);
        per_contract.push(r.timing);
        warnings.extend(r.warnings);
        fragments_scanned += r.fragments;
    }
    detections.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let per_type_instances = instances_of(&detections);
    let classes = cross_classes(&detections, sigs);
    let total_ms = watch.elapsed().as_secs_f64() * 1000.0;
    let n = target.contracts.len();
    Ok(ScanReport {
        config: *cfg,
        contracts_scanned: n,
        fragments_scanned,
        detections,
        per_type_instances,
        classes,
        timing: Timing {
            per_contract,
            total_ms,
            average_ms: (n > 0).then(|| total_ms / n as f64),
        },
        warnings,
    })
}

/// Distinct target fragments per type.
pub fn count_instances(report: &ScanReport) -> BTreeMap<VulnerabilityType, usize> {
    instances_of(&report.detections)
}

fn instances_of(detections: &[Detection]) -> BTreeMap<VulnerabilityType, usize> {
    let distinct: BTreeSet<(VulnerabilityType, FragmentRef)> =
        detections.iter().map(|d| (d.vuln_type, d.target())).collect();
    let mut out: BTreeMap<VulnerabilityType, usize> = VulnerabilityType::ALL.iter().map(|t| (*t, 0)).collect();
    for (t, _) in distinct {
        *out.entry(t).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ClassNode {
    Signature(String),
    Fragment(FragmentRef),
}

fn cross_classes(detections: &[Detection], sigs: &SignatureSet) -> Vec<CrossClass> {
    let edges = detections
        .iter()
        .map(|d| (ClassNode::Signature(d.sig_id.clone()), ClassNode::Fragment(d.target())));
    connected_components(edges)
        .into_iter()
        .map(|members| {
            let mut signatures = Vec::new();
            let mut fragments = Vec::new();
            for m in members {
                match m {
                    ClassNode::Signature(s) => signatures.push(s),
                    ClassNode::Fragment(f) => fragments.push(f),
                }
            }
            let vuln_types: BTreeSet<VulnerabilityType> = signatures
                .iter()
                .filter_map(|s| sigs.get(s).map(|s| s.vuln_type))
                .collect();
            let keys = signatures
                .iter()
                .map(|s| format!("sig:{s}"))
                .chain(fragments.iter().map(|f| f.to_string()));
            CrossClass {
                class_id: class_id(keys),
                signatures,
                vuln_types: vuln_types.into_iter().collect(),
                fragments,
            }
        })
        .collect()
}

/// One (bucket, type, run) cell of the evolution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionCell {
    pub bucket: VersionBucket,
    pub vuln_type: VulnerabilityType,
    pub mode: RenamingMode,
    pub max_difference: f64,
    pub class_count: usize,
    pub detections: usize,
    /// Lowest detection similarity, `None` (rendered `NA`) without detections.
    pub min_similarity: Option<f64>,
}

impl EvolutionCell {
    /// Whole-percent rendering of the minimum similarity, or `NA`.
    pub fn min_similarity_label(&self) -> String {
        match self.min_similarity {
            Some(s) => format!("{}%", (s * 100.0).round() as u32),
            None => "NA".to_string(),
        }
    }
}

/// A class that only exists when buckets are analysed together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossBucketClass {
    pub mode: RenamingMode,
    pub max_difference: f64,
    pub class_id: String,
    pub vuln_types: Vec<VulnerabilityType>,
    pub buckets: Vec<VersionBucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsortedCount {
    pub mode: RenamingMode,
    pub max_difference: f64,
    pub vuln_type: VulnerabilityType,
    pub class_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub bucket_sizes: BTreeMap<VersionBucket, usize>,
    pub runs: Vec<CloneConfig>,
    pub cells: Vec<EvolutionCell>,
    /// Class counts over the unsorted union of all buckets.
    pub unsorted: Vec<UnsortedCount>,
    pub cross_bucket_classes: Vec<CrossBucketClass>,
}

impl EvolutionReport {
    pub fn cell(&self, bucket: VersionBucket, vuln_type: VulnerabilityType, mode: RenamingMode) -> Option<&EvolutionCell> {
        self.cells
            .iter()
            .find(|c| c.bucket == bucket && c.vuln_type == vuln_type && c.mode == mode)
    }

    /// Text table of lowest similarity per type (rows) and bucket (columns).
    pub fn min_similarity_table(&self, mode: RenamingMode) -> String {
        let buckets: Vec<VersionBucket> = self.bucket_sizes.keys().copied().collect();
        let mut out = format!("{:<28}", format!("{} ({mode})", mode.clone_type()));
        for b in &buckets {
            out.push_str(&format!("{:>9}", b.label()));
        }
        out.push('\n');
        for t in VulnerabilityType::ALL {
            out.push_str(&format!("{:<28}", t.label()));
            for b in &buckets {
                let label = self.cell(*b, t, mode).map_or("NA".to_string(), EvolutionCell::min_similarity_label);
                out.push_str(&format!("{label:>9}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Scans every bucket under every run configuration. Classes are computed
/// per bucket; classes that would only form across buckets are listed
/// separately rather than folded into the per-bucket counts.
pub fn analyze_evolution(
    buckets: &BTreeMap<VersionBucket, Corpus>,
    sigs: &SignatureSet,
    runs: &[CloneConfig],
) -> Result<EvolutionReport> {
    let mut cells = Vec::new();
    let mut unsorted = Vec::new();
    let mut cross_bucket_classes = Vec::new();
    let union = Corpus::new(
        "all-buckets",
        buckets.values().flat_map(|c| c.contracts.iter().cloned()).collect(),
    );
    let bucket_of: BTreeMap<&str, VersionBucket> = buckets
        .iter()
        .flat_map(|(b, c)| c.contracts.iter().map(move |k| (k.id.as_str(), *b)))
        .collect();

    for cfg in runs {
        for (bucket, corpus) in buckets {
            let report = scan(corpus, sigs, cfg)?;
            for t in VulnerabilityType::ALL {
                let of_type: Vec<&Detection> = report.detections.iter().filter(|d| d.vuln_type == t).collect();
                cells.push(EvolutionCell {
                    bucket: *bucket,
                    vuln_type: t,
                    mode: cfg.mode(),
                    max_difference: cfg.max_difference(),
                    class_count: report.classes.iter().filter(|c| c.vuln_types.contains(&t)).count(),
                    detections: of_type.len(),
                    min_similarity: of_type.iter().map(|d| d.similarity).reduce(f64::min),
                });
            }
        }

        let whole = scan(&union, sigs, cfg)?;
        for t in VulnerabilityType::ALL {
            unsorted.push(UnsortedCount {
                mode: cfg.mode(),
                max_difference: cfg.max_difference(),
                vuln_type: t,
                class_count: whole.classes.iter().filter(|c| c.vuln_types.contains(&t)).count(),
            });
        }
        for class in &whole.classes {
            let spanned: BTreeSet<VersionBucket> = class
                .fragments
                .iter()
                .filter_map(|f| bucket_of.get(f.contract_id.as_str()).copied())
                .collect();
            if spanned.len() > 1 {
                cross_bucket_classes.push(CrossBucketClass {
                    mode: cfg.mode(),
                    max_difference: cfg.max_difference(),
                    class_id: class.class_id.clone(),
                    vuln_types: class.vuln_types.clone(),
                    buckets: spanned.into_iter().collect(),
                });
            }
        }
    }

    Ok(EvolutionReport {
        bucket_sizes: buckets.iter().map(|(b, c)| (*b, c.len())).collect(),
        runs: runs.to_vec(),
        cells,
        unsorted,
        cross_bucket_classes,
    })
}

/// The two standard operating points: blind at 0% and
/// consistent at 30%.
pub fn default_evolution_runs() -> Vec<CloneConfig> {
    vec![
        CloneConfig::from_percent(RenamingMode::Blind, 0).expect("valid"),
        CloneConfig::from_percent(RenamingMode::Consistent, 30).expect("valid"),
    ]
}
