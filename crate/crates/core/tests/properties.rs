use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use volcano::clone_engine::{compare, is_clone_pair, similarity};
use volcano::corpus::{dedupe, sort_by_version};
use volcano::extractor::{extract_from_source, extract_functions};
use volcano::normalize::{normalize, pretty_lines};
use volcano::{CloneConfig, Corpus, NormalizedFragment, RenamingMode, SourceContract};

const NAMES: &[&str] = &["a", "b", "total", "owner", "count", "limit"];

fn statement(rng: &mut StdRng) -> String {
    let mut id = || NAMES[rng.gen_range(0..NAMES.len())];
    let (x, y) = (id(), id());
    let n = rng.gen_range(0..4);
    match rng.gen_range(0..8) {
        0 => format!("{x} = {y} + {n};"),
        1 => format!("if ({x} > {y}) {{ {x} -= {n}; }}"),
        2 => format!("if ({x} == {n}) {y} = 0; else {y} += 1;"),
        3 => format!("for (uint i = 0; i < {x}; i++) {{ {y} += i; }}"),
        4 => format!("require({x} >= {y}, \"low {x}\");"),
        5 => format!("msg.sender.transfer({x}); // pay {y}"),
        6 => format!("while ({x} > 0) {x}--;"),
        _ => format!("/* note */ emit Moved({x}, {y});"),
    }
}

fn function(rng: &mut StdRng, name: &str) -> String {
    let body: Vec<String> = (0..rng.gen_range(1..=6)).map(|_| statement(rng)).collect();
    format!("function {name}(uint a, uint b) public {{\n    {}\n}}", body.join("\n    "))
}

fn normalized(src: &str, mode: RenamingMode) -> NormalizedFragment {
    let f = extract_from_source("p.sol", src).fragments.remove(0);
    normalize(&f, mode)
}

/// Renames every generated identifier through a random permutation to fresh names.
fn rename_all(src: &str, rng: &mut StdRng) -> String {
    let mut fresh: Vec<String> = (0..NAMES.len()).map(|k| format!("zz{k}")).collect();
    fresh.shuffle(rng);
    let mut out = String::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        match NAMES.iter().position(|n| *n == word) {
            Some(k) => out.push_str(&fresh[k]),
            None => out.push_str(word),
        }
        word.clear();
    };
    let mut in_string = false;
    for ch in src.chars() {
        if ch == '"' {
            in_string = !in_string;
        }
        if !in_string && (ch.is_ascii_alphanumeric() || ch == '_') {
            word.push(ch);
        } else {
            flush(&mut word, &mut out);
            out.push(ch);
        }
    }
    flush(&mut word, &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn pretty_print_is_idempotent(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let once = pretty_lines(&function(&mut rng, "f"));
        let twice = pretty_lines(&once.join("\n"));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn consistent_form_survives_bijective_renaming(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let src = function(&mut rng, "f");
        let renamed = rename_all(&src, &mut rng);
        prop_assert_eq!(
            normalized(&src, RenamingMode::Consistent).lines,
            normalized(&renamed, RenamingMode::Consistent).lines
        );
        prop_assert_eq!(
            normalized(&src, RenamingMode::Blind).lines,
            normalized(&renamed, RenamingMode::Blind).lines
        );
    }

    #[test]
    fn blind_similarity_dominates(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (a, b) = (function(&mut rng, "f"), function(&mut rng, "g"));
        let sim = |mode| {
            similarity(&normalized(&a, mode).lines, &normalized(&b, mode).lines).unwrap()
        };
        let (none, blind, consistent) = (sim(RenamingMode::None), sim(RenamingMode::Blind), sim(RenamingMode::Consistent));
        prop_assert!(blind >= consistent, "blind {} < consistent {}", blind, consistent);
        prop_assert!(blind >= none, "blind {} < none {}", blind, none);
        for pct in [0, 10, 20, 30] {
            let c = CloneConfig::from_percent(RenamingMode::Consistent, pct).unwrap();
            let consistent_pair = is_clone_pair(
                &normalized(&a, RenamingMode::Consistent),
                &normalized(&b, RenamingMode::Consistent),
                &c,
            ).unwrap();
            let blind_pair = is_clone_pair(
                &normalized(&a, RenamingMode::Blind),
                &normalized(&b, RenamingMode::Blind),
                &c.with_mode(RenamingMode::Blind),
            ).unwrap();
            prop_assert!(!consistent_pair || blind_pair);
        }
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(seed in any::<u64>(), mode in prop::sample::select(RenamingMode::ALL.to_vec())) {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = normalized(&function(&mut rng, "f"), mode);
        let b = normalized(&function(&mut rng, "g"), mode);
        let ab = similarity(&a.lines, &b.lines).unwrap();
        prop_assert_eq!(ab, similarity(&b.lines, &a.lines).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        let cfg = CloneConfig::from_percent(mode, 30).unwrap();
        prop_assert_eq!(compare(&a, &b, &cfg), compare(&b, &a, &cfg));
    }

    #[test]
    fn extraction_finds_every_function(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = StdRng::seed_from_u64(seed);
        let fns: Vec<String> = (0..n).map(|k| function(&mut rng, &format!("f{k}"))).collect();
        let src = format!("pragma solidity ^0.5.0;\ncontract C {{\n    uint x;\n{}\n}}\n", fns.join("\n\n"));
        let ex = extract_from_source("c.sol", &src);
        prop_assert!(ex.warnings.is_empty());
        prop_assert_eq!(ex.fragments.len(), n);
        for (f, text) in ex.fragments.iter().zip(&fns) {
            prop_assert_eq!(&f.body_text(), text);
        }
    }

    #[test]
    fn dedupe_and_buckets_partition(seed in any::<u64>(), n in 0usize..30) {
        let mut rng = StdRng::seed_from_u64(seed);
        let pragmas = ["pragma solidity ^0.4.24;", "pragma solidity >=0.5.0 <0.7.0;", "pragma solidity 0.8.1;", ""];
        let contracts: Vec<SourceContract> = (0..n)
            .map(|i| {
                let body = format!("{}\ncontract C{} {{}}", pragmas[rng.gen_range(0..pragmas.len())], rng.gen_range(0..5));
                SourceContract::new(format!("c{i}.sol"), body)
            })
            .collect();
        let corpus = Corpus::new("p", contracts);
        let once = dedupe(&corpus);
        prop_assert_eq!(&dedupe(&once), &once);
        let digests: BTreeSet<&str> = once.contracts.iter().map(|c| c.content_digest.as_str()).collect();
        prop_assert_eq!(digests.len(), once.len());
        let buckets = sort_by_version(&corpus);
        let mut ids: Vec<&str> = buckets.values().flat_map(|b| b.contracts.iter().map(|c| c.id.as_str())).collect();
        ids.sort_unstable();
        let mut all: Vec<&str> = corpus.contracts.iter().map(|c| c.id.as_str()).collect();
        all.sort_unstable();
        prop_assert_eq!(ids, all);
    }
}

#[test]
fn consistent_can_fall_below_none() {
    // A leading statement with a new identifier shifts every later index.
    let a = "function f() public {\n    s = 0;\n    p = 1;\n    q = 2;\n}";
    let b = "function f() public {\n    p = 1;\n    q = 2;\n}";
    let sim = |mode| similarity(&normalized(a, mode).lines, &normalized(b, mode).lines).unwrap();
    assert!(sim(RenamingMode::Consistent) < sim(RenamingMode::None));
    assert!(sim(RenamingMode::Blind) >= sim(RenamingMode::Consistent));
}

#[test]
fn extraction_of_loaded_contract_keeps_coordinates() {
    let src = "contract A {\n  function f() public {\n    x = 1;\n  }\n}\n";
    let c = SourceContract::new("a.sol", src);
    let f = &extract_functions(&c).fragments[0];
    assert_eq!((f.start_line, f.end_line), (2, 4));
    let lines: Vec<&str> = src.lines().collect();
    assert_eq!(f.raw_lines, lines[1..4]);
}
