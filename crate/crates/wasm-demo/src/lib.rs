//! Browser bindings: normalize a function, compare two functions, and scan a
//! pasted contract against the builtin signatures. Every export returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use volcano::clone_engine::{lcs_alignment, similarity, AlignedLine};
use volcano::detector::scan as scan_corpus;
use volcano::extractor::extract_from_source;
use volcano::normalize::normalize as normalize_fragment;
use volcano::signatures::builtin_signatures;
use volcano::{CloneConfig, Corpus, FunctionFragment, NormalizedFragment, RenamingMode, SourceContract};

#[derive(Serialize)]
struct NormalizedView {
    function: String,
    start_line: u32,
    end_line: u32,
    lines: Vec<String>,
}

#[derive(Serialize)]
struct AlignmentRow {
    left: Option<String>,
    right: Option<String>,
    matched: bool,
}

#[derive(Serialize)]
struct Comparison {
    left: String,
    right: String,
    similarity: f64,
    difference: f64,
    rows: Vec<AlignmentRow>,
}

fn mode_of(mode: &str) -> Result<RenamingMode, String> {
    mode.parse()
}

fn first_function(label: &str, source: &str) -> Result<FunctionFragment, String> {
    extract_from_source(label, source)
        .fragments
        .into_iter()
        .next()
        .ok_or_else(|| format!("no function found in {label}"))
}

fn json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

pub fn normalize_json(source: &str, mode: &str) -> Result<String, String> {
    let mode = mode_of(mode)?;
    let views: Vec<NormalizedView> = extract_from_source("input.sol", source)
        .fragments
        .iter()
        .map(|f| NormalizedView {
            function: f.name.clone(),
            start_line: f.start_line,
            end_line: f.end_line,
            lines: normalize_fragment(f, mode).lines,
        })
        .collect();
    json(&views)
}

pub fn compare_json(left: &str, right: &str, mode: &str) -> Result<String, String> {
    let mode = mode_of(mode)?;
    let a: NormalizedFragment = normalize_fragment(&first_function("left", left)?, mode);
    let b: NormalizedFragment = normalize_fragment(&first_function("right", right)?, mode);
    let sim = similarity(&a.lines, &b.lines).map_err(|e| e.to_string())?;
    let rows = lcs_alignment(&a.lines, &b.lines)
        .into_iter()
        .map(|row| match row {
            AlignedLine::Both(i, j) => AlignmentRow {
                left: Some(a.lines[i].clone()),
                right: Some(b.lines[j].clone()),
                matched: true,
            },
            AlignedLine::Left(i) => AlignmentRow {
                left: Some(a.lines[i].clone()),
                right: None,
                matched: false,
            },
            AlignedLine::Right(j) => AlignmentRow {
                left: None,
                right: Some(b.lines[j].clone()),
                matched: false,
            },
        })
        .collect();
    json(&Comparison {
        left: a.origin.name.clone(),
        right: b.origin.name.clone(),
        similarity: sim,
        difference: 1.0 - sim,
        rows,
    })
}

pub fn scan_json(source: &str, mode: &str, threshold_pct: u32) -> Result<String, String> {
    let cfg = CloneConfig::from_percent(mode_of(mode)?, threshold_pct).map_err(|e| e.to_string())?;
    let corpus = Corpus::new("input", vec![SourceContract::new("input.sol", source)]);
    let report = scan_corpus(&corpus, &builtin_signatures(), &cfg).map_err(|e| e.to_string())?;
    Ok(report.canonical_json())
}

#[wasm_bindgen]
pub fn normalize(source: &str, mode: &str) -> Result<String, JsError> {
    normalize_json(source, mode).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(left: &str, right: &str, mode: &str) -> Result<String, JsError> {
    compare_json(left, right, mode).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn scan(source: &str, mode: &str, threshold_pct: u32) -> Result<String, JsError> {
    scan_json(source, mode, threshold_pct).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const KILL: &str = "contract K {\n  function kill(address malicious) external {\n    suicide(malicious);\n  }\n}";

    #[test]
    fn normalize_lists_functions() {
        let v: Value = serde_json::from_str(&normalize_json(KILL, "consistent").unwrap()).unwrap();
        assert_eq!(v[0]["function"], "kill");
        assert_eq!(v[0]["lines"][2], "suicide ( X1 ) ;");
        assert!(normalize_json(KILL, "fuzzy").is_err());
    }

    #[test]
    fn compare_aligns() {
        let other = "function end(address who) external {\n  require(msg.sender == who);\n  suicide(who);\n}";
        let v: Value = serde_json::from_str(&compare_json(KILL, other, "consistent").unwrap()).unwrap();
        assert_eq!(v["similarity"], 0.8);
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.iter().filter(|r| r["matched"] == true).count(), 4);
        assert!(compare_json("uint x;", other, "blind").is_err());
    }

    #[test]
    fn scan_finds_listing() {
        let v: Value = serde_json::from_str(&scan_json(KILL, "consistent", 0).unwrap()).unwrap();
        assert_eq!(v["detections"][0]["sig_id"], "dos-1");
        assert!(v.get("timing").is_none());
        assert!(scan_json(KILL, "consistent", 31).is_err());
    }
}
