//! Clone-detection based vulnerability scanning for Solidity smart contracts.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`] loads `.sol` trees, buckets them by pragma version and
//!    optionally pulls verified sources from a block explorer.
//! 2. [`extractor`] cuts every contract into function-granularity fragments
//!    using a comment/string aware brace scanner.
//! 3. [`normalize`] pretty-prints fragments and applies blind or consistent
//!    identifier renaming.
//! 4. [`clone_engine`] compares normalized line sequences with a line-level
//!    LCS ratio, enumerates clone pairs under a difference threshold and
//!    groups them into classes. [`cache`] makes repeated runs incremental.
//! 5. [`signatures`] holds labeled vulnerability exemplars and [`detector`]
//!    matches target corpora against them, including per-version evolution
//!    statistics.

pub mod cache;
pub mod clock;
pub mod clone_engine;
pub mod corpus;
pub mod detector;
pub mod digest;
pub mod error;
pub mod extractor;
#[cfg(feature = "fetch")]
pub mod fetch;
pub mod normalize;
pub mod signatures;
pub mod warning;

pub use clone_engine::{CloneClass, CloneConfig, ClonePair, FragmentRef};
pub use corpus::{Corpus, SolidityVersion, SourceContract, VersionBucket};
pub use detector::{Detection, EvolutionReport, ScanReport};
pub use error::{Error, Result};
pub use extractor::FunctionFragment;
pub use normalize::{NormalizedFragment, RenamingMode};
pub use signatures::{SignatureSet, VulnSignature, VulnerabilityType};
pub use warning::Warning;
