use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SUICIDE: &str = "pragma solidity ^0.4.24;\ncontract K {\n    function kill(address malicious) external {\n        suicide(malicious);\n    }\n}\n";
const SAFE: &str = "pragma solidity ^0.3.0;\ncontract S {\n    function add(uint a, uint b) public returns (uint) {\n        return a + b;\n    }\n}\n";

fn volcano(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volcano"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VOLCANO_EXPLORER_KEY")
        .output()
        .expect("binary runs")
}

fn corpus(dir: &Path) {
    fs::create_dir_all(dir.join("corpus/nested")).unwrap();
    fs::write(dir.join("corpus/kill.sol"), SUICIDE).unwrap();
    fs::write(dir.join("corpus/nested/safe.sol"), SAFE).unwrap();
    fs::write(dir.join("corpus/readme.txt"), "not solidity").unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn scan_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let o = volcano(&["scan", "--in", "corpus", "--mode", "consistent", "--threshold", "30", "--out", "report.json"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    let dets = report["detections"].as_array().unwrap();
    let dos1 = dets.iter().find(|d| d["sig_id"] == "dos-1").expect("dos-1 detection");
    assert_eq!(dos1["contract_id"], "kill.sol");
    assert_eq!(dos1["function"], "kill");
    assert_eq!(dos1["vuln_type"], "DOS");
    assert_eq!((dos1["start_line"].as_u64(), dos1["end_line"].as_u64()), (Some(3), Some(5)));
    assert_eq!(dos1["similarity"], 1.0);
    assert_eq!(report["per_type_instances"]["DOS"], 1);
    assert_eq!(report["run"]["threshold_percent"], 30);
    assert_eq!(report["run"]["mode"], "consistent");
    assert!(report["timing"]["per_contract_ms"].as_array().unwrap().len() == 2);
    assert!(stderr(&o).contains("timing: 2 contracts"));
}

#[test]
fn scan_is_deterministic_without_timing() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let run = || volcano(&["scan", "--in", "corpus", "--omit-timing", "--jobs", "2"], tmp.path());
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v.get("timing").is_none());
}

#[test]
fn catalog_csv() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let o = volcano(&["scan", "--in", "corpus", "--format", "csv", "--threshold", "0"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("contract_id,vuln_type,sig_id,function,lines,similarity,solidity_bucket"));
    assert_eq!(lines.next(), Some("kill.sol,DOS,dos-1,kill,3-5,1.0000,^0.4"));
    assert_eq!(lines.next(), None);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["scan", "--in", "corpus", "--threshold", "45"][..],
        &["scan", "--in", "corpus", "--mode", "fuzzy"],
        &["scan", "--in", "corpus", "--min-lines", "0"],
        &["frobnicate"],
        &[],
        &["fetch", "--address", "0x1234", "--out", "x"],
        &["evolve", "--in", "corpus", "--run", "blind:40"],
    ] {
        let o = volcano(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let o = volcano(&["scan", "--threshold", "45", "--in", "c"], tmp.path());
    assert!(stderr(&o).contains("--threshold"), "{}", stderr(&o));
}

#[test]
fn operational_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = volcano(&["scan", "--in", "missing"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing"));
    let address = format!("0x{}", "ab".repeat(20));
    let o = volcano(&["fetch", "--address", &address, "--out", "fetched"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("VOLCANO_EXPLORER_KEY"));
}

#[test]
fn empty_corpus_warns() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = volcano(&["scan", "--in", "empty", "--format", "text"], tmp.path());
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning: no .sol files"));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("average NA, total 00:00:00"), "{text}");
}

#[test]
fn evolve_csv_marks_na() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let o = volcano(&["evolve", "--in", "corpus", "--out", "evo.csv"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("evo.csv")).unwrap();
    assert!(csv.starts_with("bucket,vuln_type,mode,threshold,class_count,detections,min_similarity\n"));
    assert!(csv.contains("^0.3,REENTRANCY,consistent,30%,0,0,NA\n"), "{csv}");
    assert!(csv.contains("^0.4,DOS,blind,0%,1,1,100%\n"), "{csv}");
    // 2 buckets x 8 types x 2 runs plus the header.
    assert_eq!(csv.lines().count(), 33);
}

#[test]
fn derive_then_scan_with_derived_set() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::create_dir_all(dir.join("vulns")).unwrap();
    let member = |n: &str| {
        format!("contract V{n} {{\n    function drain{n}(uint amt{n}) public {{\n        if (bal{n} >= amt{n})\n        msg.sender.call.value(amt{n})();\n        bal{n} -= amt{n};\n    }}\n}}\n")
    };
    for n in ["a", "b", "c"] {
        fs::write(dir.join(format!("vulns/{n}.sol")), member(n)).unwrap();
    }
    fs::write(dir.join("labels.csv"), "contract_id,vuln_type\na.sol,REENTRANCY\nb.sol,REENTRANCY\nc.sol,REENTRANCY\n").unwrap();
    let o = volcano(&["derive", "--labels", "labels.csv", "--in", "vulns", "--out", "sigs"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("derived 1 signatures"));
    let sig_file = fs::read_to_string(dir.join("sigs/reentrancy-1.sol")).unwrap();
    assert!(sig_file.starts_with("// @volcano:vuln=REENTRANCY id=reentrancy-1\n"), "{sig_file}");
    assert_eq!(fs::read_to_string(dir.join("sigs/review.json")).unwrap().trim(), "[]");

    fs::create_dir_all(dir.join("target")).unwrap();
    fs::write(dir.join("target/t.sol"), member("zz")).unwrap();
    let o = volcano(&["scan", "--sigs", "sigs", "--in", "target", "--threshold", "0", "--omit-timing"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["detections"][0]["sig_id"], "reentrancy-1");

    fs::write(dir.join("labels.csv"), "contract_id,vuln_type\na.sol,REENTRANCY\n").unwrap();
    let o = volcano(&["derive", "--labels", "labels.csv", "--in", "vulns", "--out", "sigs2"], dir);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn clones_cache_lifecycle() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir);
    fs::write(dir.join("corpus/kill2.sol"), SUICIDE.replace("malicious", "target")).unwrap();
    let o = volcano(&["clones", "--in", "corpus"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("re-analyzed 3 of 3"));
    let first: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(first["pairs"].as_array().unwrap().len(), 1);
    let cache: Value = serde_json::from_str(&fs::read_to_string(dir.join(".volcano-cache/clones.json")).unwrap()).unwrap();
    assert_eq!(cache["format_version"], 1);

    let o = volcano(&["clones", "--in", "corpus"], dir);
    assert!(stderr(&o).contains("re-analyzed 0 of 3"));
    assert_eq!(serde_json::from_slice::<Value>(&o.stdout).unwrap(), first);

    let o = volcano(&["cache", "clear"], dir);
    assert!(o.status.success());
    assert!(!dir.join(".volcano-cache").exists());
}

#[test]
fn extract_normalize_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let o = volcano(&["extract", "--in", "corpus"], tmp.path());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "kill.sol:3-5:kill\nnested/safe.sol:3-5:add\n");
    let o = volcano(&["extract", "--in", "corpus/kill.sol", "--dump"], tmp.path());
    let dump: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(dump[0]["raw_lines"][1], "        suicide(malicious);");
    let o = volcano(&["normalize", "--in", "corpus/kill.sol", "--mode", "blind"], tmp.path());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("function X ( address X ) external\n{\nsuicide ( X ) ;\n}"), "{text}");
    let o = volcano(&["manifest", "--in", "corpus"], tmp.path());
    let m: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m[0]["id"], "kill.sol");
    assert_eq!(m[0]["version_bucket"], "^0.4");
    assert_eq!(m[1]["version_bucket"], "^0.3");
    assert_eq!(m[0]["digest"].as_str().unwrap().len(), 64);
}
