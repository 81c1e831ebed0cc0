//! Vulnerability signatures: labeled exemplar functions used as clone queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clone_engine::{cluster_classes, detect_pairs, CloneConfig, FragmentRef};
use crate::corpus::{Corpus, SourceContract};
use crate::error::{Error, Result};
use crate::extractor::{extract_from_source, extract_functions, FunctionFragment};
use crate::normalize::{normalize, pretty_print, rename_blind, rename_consistent, NormalizedFragment, RenamingMode};
use crate::warning::Warning;

pub const ANNOTATION_PREFIX: &str = "@volcano:vuln=";
pub const MANIFEST_FILE: &str = "signatures.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VulnerabilityType {
    Reentrancy,
    Dos,
    IntegerUo,
    CallToUnknown,
    OutOfGas,
    MishandledExceptions,
    MismatchedTypecasting,
    WeakModifiers,
}

impl VulnerabilityType {
    pub const ALL: [VulnerabilityType; 8] = [
        VulnerabilityType::Reentrancy,
        VulnerabilityType::Dos,
        VulnerabilityType::IntegerUo,
        VulnerabilityType::CallToUnknown,
        VulnerabilityType::OutOfGas,
        VulnerabilityType::MishandledExceptions,
        VulnerabilityType::MismatchedTypecasting,
        VulnerabilityType::WeakModifiers,
    ];

    /// Stable serialized name, e.g. `INTEGER_UO`.
    pub fn as_str(&self) -> &'static str {
        match self {
            VulnerabilityType::Reentrancy => "REENTRANCY",
            VulnerabilityType::Dos => "DOS",
            VulnerabilityType::IntegerUo => "INTEGER_UO",
            VulnerabilityType::CallToUnknown => "CALL_TO_UNKNOWN",
            VulnerabilityType::OutOfGas => "OUT_OF_GAS",
            VulnerabilityType::MishandledExceptions => "MISHANDLED_EXCEPTIONS",
            VulnerabilityType::MismatchedTypecasting => "MISMATCHED_TYPECASTING",
            VulnerabilityType::WeakModifiers => "WEAK_MODIFIERS",
        }
    }

    /// Human-readable row label for tables.
    pub fn label(&self) -> &'static str {
        match self {
            VulnerabilityType::Reentrancy => "Re-entrancy",
            VulnerabilityType::Dos => "Denial of Service",
            VulnerabilityType::IntegerUo => "Integer Underflow/Overflow",
            VulnerabilityType::CallToUnknown => "Call-To-Unknown",
            VulnerabilityType::OutOfGas => "Out-of-Gas exception",
            VulnerabilityType::MishandledExceptions => "Mishandled Exceptions",
            VulnerabilityType::MismatchedTypecasting => "Mismatched Typecasting",
            VulnerabilityType::WeakModifiers => "Weak Modifiers",
        }
    }

    fn slug(&self) -> String {
        self.as_str().to_ascii_lowercase().replace('_', "-")
    }
}

impl fmt::Display for VulnerabilityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VulnerabilityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        VulnerabilityType::ALL
            .into_iter()
            .find(|t| t.as_str() == wanted)
            .ok_or_else(|| Error::UnknownType(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnSignature {
    pub sig_id: String,
    pub vuln_type: VulnerabilityType,
    /// Function source the exemplar was normalized from.
    pub source_text: String,
    pub exemplar: NormalizedFragment,
    pub blind: NormalizedFragment,
    pub consistent: NormalizedFragment,
    #[serde(default)]
    pub source_listing: Option<String>,
    #[serde(default)]
    pub origin_class: Option<String>,
    /// Synthetic stand-in with no reference exemplar behind it.
    #[serde(default)]
    pub placeholder: bool,
}

impl VulnSignature {
    pub fn from_fragment(sig_id: impl Into<String>, vuln_type: VulnerabilityType, fragment: &FunctionFragment) -> Self {
        let exemplar = pretty_print(fragment);
        let blind = rename_blind(&exemplar).expect("pretty_print yields mode none");
        let consistent = rename_consistent(&exemplar).expect("pretty_print yields mode none");
        VulnSignature {
            sig_id: sig_id.into(),
            vuln_type,
            source_text: fragment.body_text(),
            exemplar,
            blind,
            consistent,
            source_listing: None,
            origin_class: None,
            placeholder: false,
        }
    }

    pub fn exemplar_for(&self, mode: RenamingMode) -> &NormalizedFragment {
        match mode {
            RenamingMode::None => &self.exemplar,
            RenamingMode::Blind => &self.blind,
            RenamingMode::Consistent => &self.consistent,
        }
    }

    pub fn origin(&self) -> &FragmentRef {
        &self.exemplar.origin
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignatureSet {
    pub signatures: Vec<VulnSignature>,
    pub provenance: String,
}

/// Comparable content of a set: ids, types and normalized exemplar lines.
pub type SetFingerprint = Vec<(String, VulnerabilityType, Vec<String>)>;

impl SignatureSet {
    pub fn new(signatures: Vec<VulnSignature>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &signatures {
            if !seen.insert(s.sig_id.as_str()) {
                return Err(Error::DuplicateSignature(s.sig_id.clone()));
            }
        }
        Ok(SignatureSet {
            signatures,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn get(&self, sig_id: &str) -> Option<&VulnSignature> {
        self.signatures.iter().find(|s| s.sig_id == sig_id)
    }

    pub fn fingerprint(&self) -> SetFingerprint {
        let mut fp: SetFingerprint = self
            .signatures
            .iter()
            .map(|s| (s.sig_id.clone(), s.vuln_type, s.exemplar.lines.clone()))
            .collect();
        fp.sort();
        fp
    }

    /// Writes one annotated `.sol` file per signature plus a JSON manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Vec::with_capacity(self.signatures.len());
        for sig in &self.signatures {
            let file = format!("{}.sol", file_safe(&sig.sig_id));
            let path = dir.join(&file);
            let text = format!(
                "// {ANNOTATION_PREFIX}{} id={}\n{}\n",
                sig.vuln_type, sig.sig_id, sig.source_text
            );
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            manifest.push(ManifestEntry {
                sig_id: sig.sig_id.clone(),
                vuln_type: sig.vuln_type,
                source_file: file,
                provenance: sig.source_listing.clone(),
                origin_class: sig.origin_class.clone(),
                placeholder: sig.placeholder,
            });
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sig_id: String,
    pub vuln_type: VulnerabilityType,
    pub source_file: String,
    #[serde(default)]
    pub provenance: Option<String>,
    #[serde(default)]
    pub origin_class: Option<String>,
    #[serde(default)]
    pub placeholder: bool,
}

struct Annotation {
    vuln_type: VulnerabilityType,
    id: Option<String>,
}

fn parse_annotation(line: &str) -> Option<Result<Annotation>> {
    let body = line.trim().strip_prefix("//")?.trim();
    let rest = body.strip_prefix(ANNOTATION_PREFIX)?;
    let mut parts = rest.split_whitespace();
    let ty = parts.next().unwrap_or("");
    let vuln_type = match ty.parse() {
        Ok(t) => t,
        Err(e) => return Some(Err(e)),
    };
    let id = parts.find_map(|p| p.strip_prefix("id=").map(str::to_string));
    Some(Ok(Annotation { vuln_type, id }))
}

/// Parses annotated signature source. `file_label` names the file in ids and
/// errors.
pub fn signatures_from_source(file_label: &str, source: &str, min_lines: usize) -> Result<Vec<VulnSignature>> {
    let lines: Vec<&str> = source.split('\n').collect();
    let stem = Path::new(file_label)
        .file_stem()
        .map_or_else(|| file_label.to_string(), |s| s.to_string_lossy().into_owned());
    let mut out = Vec::new();
    for fragment in extract_from_source(file_label, source).fragments {
        let above = lines[..fragment.start_line as usize - 1]
            .iter()
            .rev()
            .find(|l| !l.trim().is_empty());
        let annotation = match above.and_then(|l| parse_annotation(l)) {
            Some(a) => a?,
            None => {
                return Err(Error::MissingAnnotation {
                    file: file_label.to_string(),
                    function: fragment.name.clone(),
                    line: fragment.start_line,
                })
            }
        };
        let sig_id = annotation
            .id
            .unwrap_or_else(|| format!("{stem}:{}:{}", fragment.name, fragment.start_line));
        let sig = VulnSignature::from_fragment(sig_id, annotation.vuln_type, &fragment);
        if sig.exemplar.len() < min_lines {
            return Err(Error::SignatureTooSmall {
                sig_id: sig.sig_id,
                lines: sig.exemplar.len(),
                min_lines,
            });
        }
        out.push(sig);
    }
    Ok(out)
}

/// Loads annotated `.sol` signature files from a file or a directory tree.
pub fn load_signatures(path: &Path) -> Result<SignatureSet> {
    if !path.exists() {
        return Err(Error::MissingRoot(path.to_path_buf()));
    }
    let (files, manifest_dir): (Vec<PathBuf>, Option<&Path>) = if path.is_dir() {
        let mut files: Vec<PathBuf> = walkdir::WalkDir::new(path)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "sol"))
            .map(|e| e.into_path())
            .collect();
        files.sort();
        (files, Some(path))
    } else {
        (vec![path.to_path_buf()], path.parent())
    };

    let mut signatures = Vec::new();
    for file in &files {
        let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let label = file.to_string_lossy();
        signatures.extend(signatures_from_source(&label, &text, CloneConfig::DEFAULT_MIN_LINES)?);
    }

    if let Some(dir) = manifest_dir {
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.is_file() {
            let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: manifest_path.clone(),
                source: e,
            })?;
            let by_id: BTreeMap<&str, &ManifestEntry> = entries.iter().map(|e| (e.sig_id.as_str(), e)).collect();
            for sig in &mut signatures {
                if let Some(entry) = by_id.get(sig.sig_id.as_str()) {
                    sig.source_listing = entry.provenance.clone();
                    sig.origin_class = entry.origin_class.clone();
                    sig.placeholder = entry.placeholder;
                }
            }
        }
    }
    SignatureSet::new(signatures, format!("loaded from {}", path.display()))
}

struct BuiltinListing {
    sig_id: &'static str,
    vuln_type: VulnerabilityType,
    provenance: &'static str,
    placeholder: bool,
    source: &'static str,
}

const BUILTIN: &[BuiltinListing] = &[
    BuiltinListing {
        sig_id: "call-to-unknown-1",
        vuln_type: VulnerabilityType::CallToUnknown,
        provenance: "reference call-to-unknown signature 1: unguarded re-initialisation of the owner; textually identical to weak-modifiers-1",
        placeholder: false,
        source: "function initialize() public {\n\tnew_owner = msg.sender;\n}",
    },
    BuiltinListing {
        sig_id: "call-to-unknown-2",
        vuln_type: VulnerabilityType::CallToUnknown,
        provenance: "reference call-to-unknown signature 2: fallback forwarding calldata through delegatecall",
        placeholder: false,
        source: "function() payable {\n    if (msg.data.length > 0)\n      owner.delegatecall(msg.data); \n  }",
    },
    BuiltinListing {
        sig_id: "dos-1",
        vuln_type: VulnerabilityType::Dos,
        provenance: "reference DoS signature 1: unguarded suicide",
        placeholder: false,
        source: "function kill(address malicious) external {\n    suicide(malicious);\n    }",
    },
    BuiltinListing {
        sig_id: "dos-2",
        vuln_type: VulnerabilityType::Dos,
        provenance: "reference DoS signature 2: unguarded selfdestruct",
        placeholder: false,
        source: "function kill(address malicious) external {\n    selfdestruct(malicious);\n    }",
    },
    BuiltinListing {
        sig_id: "dos-3",
        vuln_type: VulnerabilityType::Dos,
        provenance: "reference DoS signature 3: send inside a loop",
        placeholder: false,
        source: "function sendPayments() public returns (bool){\n         for(uint i=0;i<n;i++) {\n            addresses.send(msg.sender);\n        }    return true;\n    }",
    },
    BuiltinListing {
        sig_id: "dos-4",
        vuln_type: VulnerabilityType::Dos,
        provenance: "reference DoS signature 4: require(send) inside a loop",
        placeholder: false,
        source: "function sendPayments() public returns (bool){\n         for(uint i=0;i<n;i++) {\n             require(addresses.send(msg.sender));\n        }    \n        return true;\n    }",
    },
    BuiltinListing {
        sig_id: "reentrancy-1",
        vuln_type: VulnerabilityType::Reentrancy,
        provenance: "reference re-entrancy signature: external call before the balance update; textually identical to integer-uo-1",
        placeholder: false,
        source: "function externalSend(uint amountToSend) {\n\tif(balance >= amountToSend)\n\tmsg.sender.call.value(amountToSend)();\n\tbalance -= amountToSend; //state variable updated after external call function is executed\n}",
    },
    BuiltinListing {
        sig_id: "integer-uo-1",
        vuln_type: VulnerabilityType::IntegerUo,
        provenance: "reference integer underflow/overflow signature; textually identical to reentrancy-1, kept separate for type attribution",
        placeholder: false,
        source: "function externalSend(uint amountToSend) {\n\tif(balance >= amountToSend)\n\tmsg.sender.call.value(amountToSend)();\n\tbalance -= amountToSend; //\n}",
    },
    BuiltinListing {
        sig_id: "mishandled-exceptions-1",
        vuln_type: VulnerabilityType::MishandledExceptions,
        provenance: "reference mishandled-exceptions signature: unchecked low-level call result",
        placeholder: false,
        source: "function externalCall(uint str) {\n\tmsg.sender.delegateCall(str); //without checking for return value\n}",
    },
    BuiltinListing {
        sig_id: "weak-modifiers-1",
        vuln_type: VulnerabilityType::WeakModifiers,
        provenance: "reference weak access modifiers signature; identical to call-to-unknown-1 apart from a comment",
        placeholder: false,
        source: "function initialize() public { //weak access modifier for the function initialize\n\tnew_owner = msg.sender;\n}",
    },
    BuiltinListing {
        sig_id: "out-of-gas-1",
        vuln_type: VulnerabilityType::OutOfGas,
        provenance: "reference out-of-gas signature: gasless send",
        placeholder: false,
        source: "function externalSend(uint amountToSend) {\n\tif(balance >= amountToSend)\n\t msg.sender.send(amountToSend); //gasless-send\n}",
    },
    BuiltinListing {
        sig_id: "mismatched-typecasting-placeholder",
        vuln_type: VulnerabilityType::MismatchedTypecasting,
        provenance: "PLACEHOLDER: no reference exemplar exists for this type; narrowing cast written for this tool, excluded from metrics",
        placeholder: true,
        source: "function toSmallUnit(uint256 amount) public pure returns (uint8) {\n    return uint8(amount);\n}",
    },
];

/// Source text of a builtin signature, by id.
pub fn builtin_source(sig_id: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|b| b.sig_id == sig_id).map(|b| b.source)
}

/// The reference signature listings plus one clearly marked placeholder.
pub fn builtin_signatures() -> SignatureSet {
    let signatures = BUILTIN
        .iter()
        .map(|b| {
            let contract_id = format!("builtin/{}.sol", b.sig_id);
            let fragment = extract_from_source(&contract_id, b.source)
                .fragments
                .pop()
                .expect("builtin listing holds one function");
            let mut sig = VulnSignature::from_fragment(b.sig_id, b.vuln_type, &fragment);
            sig.source_listing = Some(b.provenance.to_string());
            sig.placeholder = b.placeholder;
            sig
        })
        .collect();
    SignatureSet::new(signatures, "builtin reference listings").expect("builtin ids are unique")
}

/// A clone class whose members carry more than one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewClass {
    pub class_id: String,
    pub members: Vec<ReviewMember>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewMember {
    pub fragment: FragmentRef,
    pub vuln_type: VulnerabilityType,
}

#[derive(Debug, Clone)]
pub struct Derivation {
    pub set: SignatureSet,
    pub review: Vec<ReviewClass>,
    pub warnings: Vec<Warning>,
}

/// Clusters the labeled corpus and turns every label-pure class into one
/// signature whose exemplar is the median-sized member.
pub fn derive_signatures(
    vuln_corpus: &Corpus,
    labels: &BTreeMap<String, VulnerabilityType>,
    cfg: &CloneConfig,
) -> Result<Derivation> {
    if let Some(missing) = vuln_corpus.contracts.iter().find(|c| !labels.contains_key(&c.id)) {
        return Err(Error::UnlabeledContract(missing.id.clone()));
    }
    let mut warnings = Vec::new();
    let mut raw: BTreeMap<FragmentRef, FunctionFragment> = BTreeMap::new();
    let mut normalized: Vec<NormalizedFragment> = Vec::new();
    for contract in &vuln_corpus.contracts {
        let ex = extract_functions(contract);
        warnings.extend(ex.warnings);
        for f in ex.fragments {
            normalized.push(normalize(&f, cfg.mode()));
            raw.insert(f.reference(), f);
        }
    }
    let sizes: BTreeMap<&FragmentRef, usize> = normalized.iter().map(|n| (&n.origin, n.len())).collect();
    let pairs = detect_pairs(&normalized, cfg)?;
    let classes = cluster_classes(&pairs);

    let mut signatures = Vec::new();
    let mut review = Vec::new();
    let mut per_type: BTreeMap<VulnerabilityType, usize> = BTreeMap::new();
    for class in classes {
        let member_types: BTreeSet<VulnerabilityType> =
            class.members.iter().map(|m| labels[&m.contract_id]).collect();
        if member_types.len() != 1 {
            review.push(ReviewClass {
                class_id: class.class_id.clone(),
                members: class
                    .members
                    .iter()
                    .map(|m| ReviewMember {
                        fragment: m.clone(),
                        vuln_type: labels[&m.contract_id],
                    })
                    .collect(),
            });
            continue;
        }
        let vuln_type = *member_types.iter().next().expect("one type");
        let exemplar = median_member(&class.members, &sizes);
        let n = per_type.entry(vuln_type).or_insert(0);
        *n += 1;
        let mut sig = VulnSignature::from_fragment(format!("{}-{}", vuln_type.slug(), n), vuln_type, &raw[exemplar]);
        sig.origin_class = Some(class.class_id.clone());
        sig.source_listing = Some(format!("derived from clone class {} ({} members)", class.class_id, class.members.len()));
        signatures.push(sig);
    }
    if signatures.is_empty() {
        warnings.push(Warning::EmptySignatureSet);
    }
    Ok(Derivation {
        set: SignatureSet::new(signatures, format!("derived from corpus `{}`", vuln_corpus.label))?,
        review,
        warnings,
    })
}

/// Member with the (lower) median normalized line count; ties go to the
/// smallest contract id.
fn median_member<'a>(members: &'a [FragmentRef], sizes: &BTreeMap<&FragmentRef, usize>) -> &'a FragmentRef {
    let mut counts: Vec<usize> = members.iter().map(|m| sizes[m]).collect();
    counts.sort_unstable();
    let median = counts[(counts.len() - 1) / 2];
    members
        .iter()
        .filter(|m| sizes[m] == median)
        .min()
        .expect("median count belongs to a member")
}

/// Labels a contract set directly (for tests and tooling).
pub fn label_all(corpus: &Corpus, vuln_type: VulnerabilityType) -> BTreeMap<String, VulnerabilityType> {
    corpus.contracts.iter().map(|c: &SourceContract| (c.id.clone(), vuln_type)).collect()
}
