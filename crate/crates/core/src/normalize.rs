//! Pretty-printing and identifier renaming.
//!
//! A fragment is reduced to a sequence of canonical lines: comments dropped,
//! tokens separated by single spaces (member access `a.b` stays glued), and a
//! line break after every `;`, `{`, `}` and after an unbraced control header.
//! Renaming then rewrites identifiers either blindly (`X`) or consistently
//! (`X1`, `X2`, ... by first occurrence, `X0` for the fragment's own name).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::clone_engine::FragmentRef;
use crate::digest::line_digest;
use crate::error::{Error, Result};
use crate::extractor::{is_ident_continue, is_ident_start, strip_comments, FunctionFragment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenamingMode {
    None,
    Blind,
    Consistent,
}

impl RenamingMode {
    pub const ALL: [RenamingMode; 3] = [RenamingMode::None, RenamingMode::Blind, RenamingMode::Consistent];

    /// Clone type reported for near-miss detection in this mode.
    pub fn clone_type(&self) -> &'static str {
        match self {
            RenamingMode::None => "Type 3-1",
            RenamingMode::Blind => "Type 3-2",
            RenamingMode::Consistent => "Type 3-2c",
        }
    }
}

impl fmt::Display for RenamingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenamingMode::None => "none",
            RenamingMode::Blind => "blind",
            RenamingMode::Consistent => "consistent",
        })
    }
}

impl FromStr for RenamingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(RenamingMode::None),
            "blind" => Ok(RenamingMode::Blind),
            "consistent" => Ok(RenamingMode::Consistent),
            _ => Err(format!("unknown renaming mode `{s}` (expected none|blind|consistent)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedFragment {
    pub origin: FragmentRef,
    pub mode: RenamingMode,
    pub lines: Vec<String>,
    pub line_digests: Vec<u64>,
    /// Consistent-mode mapping from original identifier to `Xn`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub renaming: Vec<(String, String)>,
}

impl NormalizedFragment {
    fn from_lines(origin: FragmentRef, mode: RenamingMode, lines: Vec<String>) -> Self {
        let line_digests = lines.iter().map(|l| line_digest(l)).collect();
        NormalizedFragment {
            origin,
            mode,
            lines,
            line_digests,
            renaming: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Canonical line form of a fragment with identifiers untouched.
pub fn pretty_print(fragment: &FunctionFragment) -> NormalizedFragment {
    let lines = pretty_lines(&fragment.body_text());
    NormalizedFragment::from_lines(fragment.reference(), RenamingMode::None, lines)
}

/// Pretty-prints `fragment` and applies `mode`.
pub fn normalize(fragment: &FunctionFragment, mode: RenamingMode) -> NormalizedFragment {
    let printed = pretty_print(fragment);
    match mode {
        RenamingMode::None => printed,
        RenamingMode::Blind => rename_unchecked(&printed, RenamingMode::Blind),
        RenamingMode::Consistent => rename_unchecked(&printed, RenamingMode::Consistent),
    }
}

pub fn rename_blind(nf: &NormalizedFragment) -> Result<NormalizedFragment> {
    if nf.mode != RenamingMode::None {
        return Err(Error::ModeError(nf.mode));
    }
    Ok(rename_unchecked(nf, RenamingMode::Blind))
}

pub fn rename_consistent(nf: &NormalizedFragment) -> Result<NormalizedFragment> {
    if nf.mode != RenamingMode::None {
        return Err(Error::ModeError(nf.mode));
    }
    Ok(rename_unchecked(nf, RenamingMode::Consistent))
}

fn rename_unchecked(nf: &NormalizedFragment, mode: RenamingMode) -> NormalizedFragment {
    let tokenized: Vec<Vec<Token<'_>>> = nf.lines.iter().map(|l| tokenize(l)).collect();
    let declared = tokenized.first().and_then(|first| declared_name(first));

    let mut mapping: HashMap<&str, String> = HashMap::new();
    let mut order: Vec<(String, String)> = Vec::new();
    if let (RenamingMode::Consistent, Some(name)) = (mode, declared) {
        mapping.insert(name, "X0".to_string());
        order.push((name.to_string(), "X0".to_string()));
    }
    let mut next = 1usize;

    let lines = tokenized
        .iter()
        .map(|toks| {
            let renamed: Vec<Token<'_>> = toks
                .iter()
                .map(|t| {
                    if t.kind != TokenKind::Ident || is_exempt(&t.text) {
                        return t.clone();
                    }
                    let replacement = match mode {
                        RenamingMode::Blind => "X".to_string(),
                        _ => mapping
                            .entry(t.text.as_ref())
                            .or_insert_with(|| {
                                let fresh = format!("X{next}");
                                next += 1;
                                order.push((t.text.to_string(), fresh.clone()));
                                fresh
                            })
                            .clone(),
                    };
                    Token::owned(TokenKind::Ident, replacement)
                })
                .collect();
            render(&renamed)
        })
        .collect();

    let mut out = NormalizedFragment::from_lines(nf.origin.clone(), mode, lines);
    if mode == RenamingMode::Consistent {
        out.renaming = order;
    }
    out
}

fn declared_name<'b>(first_line: &'b [Token<'_>]) -> Option<&'b str> {
    match first_line {
        [kw, name, ..]
            if matches!(kw.text.as_ref(), "function" | "modifier")
                && name.kind == TokenKind::Ident
                && !is_exempt(&name.text) =>
        {
            Some(name.text.as_ref())
        }
        _ => None,
    }
}

/// Pretty-prints arbitrary Solidity text into canonical lines.
pub fn pretty_lines(text: &str) -> Vec<String> {
    let visible = strip_comments(text);
    split_lines(&tokenize(&visible))
}

fn split_lines(tokens: &[Token<'_>]) -> Vec<String> {
    #[derive(PartialEq)]
    enum Control {
        Idle,
        AwaitParen,
        InHeader(usize),
    }

    let mut lines = Vec::new();
    let mut cur: Vec<Token<'_>> = Vec::new();
    let mut depth = 0usize;
    let mut control = Control::Idle;

    let flush = |cur: &mut Vec<Token<'_>>, lines: &mut Vec<String>| {
        if !cur.is_empty() {
            lines.push(render(cur));
            cur.clear();
        }
    };
    let breaks_after = |next: Option<&Token<'_>>| {
        next.is_some_and(|n| n.kind != TokenKind::Punct || !matches!(n.text.as_ref(), "{" | ";"))
    };

    for (idx, tok) in tokens.iter().enumerate() {
        let next = tokens.get(idx + 1);
        let text = tok.text.as_ref();
        if tok.kind == TokenKind::Punct {
            match text {
                "{" => {
                    flush(&mut cur, &mut lines);
                    lines.push("{".to_string());
                    control = Control::Idle;
                    depth = 0;
                    continue;
                }
                "}" => {
                    flush(&mut cur, &mut lines);
                    lines.push("}".to_string());
                    control = Control::Idle;
                    depth = 0;
                    continue;
                }
                ";" if depth == 0 => {
                    cur.push(tok.clone());
                    flush(&mut cur, &mut lines);
                    continue;
                }
                "(" | "[" => {
                    if text == "(" && control == Control::AwaitParen {
                        control = Control::InHeader(depth);
                    }
                    depth += 1;
                    cur.push(tok.clone());
                    continue;
                }
                ")" | "]" => {
                    depth = depth.saturating_sub(1);
                    cur.push(tok.clone());
                    if control == Control::InHeader(depth) {
                        control = Control::Idle;
                        if breaks_after(next) {
                            flush(&mut cur, &mut lines);
                        }
                    }
                    continue;
                }
                _ => {}
            }
        } else if tok.kind == TokenKind::Ident && depth == 0 {
            match text {
                "if" | "while" | "for" => control = Control::AwaitParen,
                "else" => {
                    cur.push(tok.clone());
                    let chained_if = next.is_some_and(|n| n.text == "if");
                    if !chained_if && breaks_after(next) {
                        flush(&mut cur, &mut lines);
                    }
                    continue;
                }
                _ => {}
            }
        }
        cur.push(tok.clone());
    }
    flush(&mut cur, &mut lines);
    lines
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Ident,
    Number,
    Str,
    Punct,
}

#[derive(Debug, Clone)]
struct Token<'a> {
    kind: TokenKind,
    text: std::borrow::Cow<'a, str>,
}

impl<'a> Token<'a> {
    fn borrowed(kind: TokenKind, text: &'a str) -> Self {
        Token {
            kind,
            text: std::borrow::Cow::Borrowed(text),
        }
    }

    fn owned(kind: TokenKind, text: String) -> Self {
        Token {
            kind,
            text: std::borrow::Cow::Owned(text),
        }
    }
}

const OPERATORS: &[&str] = &[
    ">>>=", ">>=", "<<=", "**=", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=",
    "/=", "%=", "|=", "&=", "^=", "<<", ">>", "**", "=>", "->", ":=",
];

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if is_ident_start(c) {
            let start = i;
            while i < b.len() && is_ident_continue(b[i]) {
                i += 1;
            }
            out.push(Token::borrowed(TokenKind::Ident, &text[start..i]));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < b.len()
                && (is_ident_continue(b[i])
                    || (b[i] == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)))
            {
                i += 1;
            }
            out.push(Token::borrowed(TokenKind::Number, &text[start..i]));
        } else if c == b'"' || c == b'\'' {
            let start = i;
            i += 1;
            while i < b.len() && b[i] != c && b[i] != b'\n' {
                i += if b[i] == b'\\' && i + 1 < b.len() && b[i + 1] != b'\n' { 2 } else { 1 };
            }
            if i < b.len() && b[i] == c {
                i += 1;
            }
            out.push(Token::borrowed(TokenKind::Str, &text[start..i]));
        } else {
            let op = OPERATORS.iter().find(|op| text[i..].starts_with(*op));
            let len = match op {
                Some(op) => op.len(),
                None => text[i..].chars().next().map_or(1, char::len_utf8),
            };
            out.push(Token::borrowed(TokenKind::Punct, &text[i..i + len]));
            i += len;
        }
    }
    out
}

fn render(tokens: &[Token<'_>]) -> String {
    let mut out = String::new();
    let mut prev_dot = true;
    for t in tokens {
        let is_dot = t.kind == TokenKind::Punct && t.text == ".";
        if !prev_dot && !is_dot {
            out.push(' ');
        }
        out.push_str(&t.text);
        prev_dot = is_dot;
    }
    out
}

/// Keywords, builtin globals/members and elementary type names that keep
/// their spelling under renaming.
const EXEMPT: &[&str] = &[
    // keywords
    "abstract", "anonymous", "as", "assembly", "break", "calldata", "catch", "constant",
    "constructor", "continue", "contract", "delete", "do", "else", "emit", "enum", "event",
    "external", "fallback", "false", "for", "function", "if", "immutable", "import", "indexed",
    "interface", "internal", "is", "library", "memory", "modifier", "new", "override", "payable",
    "pragma", "private", "public", "pure", "receive", "return", "returns", "storage", "struct",
    "throw", "true", "try", "type", "unchecked", "using", "var", "view", "virtual", "while",
    "let", "error", "revert", "hex", "unicode", "solidity",
    // units
    "wei", "gwei", "szabo", "finney", "ether", "seconds", "minutes", "hours", "days", "weeks",
    "years",
    // builtin globals
    "msg", "block", "tx", "this", "now", "super", "abi",
    // builtin members and functions
    "sender", "value", "data", "call", "delegatecall", "staticcall", "callcode", "send",
    "transfer", "require", "assert", "suicide", "selfdestruct", "length", "push", "pop",
    "keccak256", "sha3", "sha256", "ripemd160", "ecrecover", "gasleft", "blockhash", "addmod",
    "mulmod",
    // elementary types
    "address", "bool", "string", "mapping", "byte", "bytes", "int", "uint", "fixed", "ufixed",
];

fn exempt_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| EXEMPT.iter().copied().collect())
}

/// Whether `word` keeps its spelling under renaming.
pub fn is_exempt(word: &str) -> bool {
    if exempt_set().contains(word) {
        return true;
    }
    let sized = |prefix: &str| {
        word.strip_prefix(prefix)
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    };
    let fixed_point = |prefix: &str| {
        word.strip_prefix(prefix).is_some_and(|rest| {
            rest.split_once('x').is_some_and(|(m, n)| {
                !m.is_empty()
                    && !n.is_empty()
                    && m.bytes().chain(n.bytes()).all(|b| b.is_ascii_digit())
            })
        })
    };
    sized("uint") || sized("int") || sized("bytes") || fixed_point("fixed") || fixed_point("ufixed")
}

/// Renamable identifiers of a line, in order of appearance (for diagnostics and tests).
pub fn renamable_identifiers(line: &str) -> Vec<String> {
    tokenize(line)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Ident && !is_exempt(&t.text))
        .map(|t| t.text.into_owned())
        .collect()
}

/// Mapping of consistent renaming as a sorted map (original -> token).
pub fn renaming_map(nf: &NormalizedFragment) -> BTreeMap<String, String> {
    nf.renaming.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::extract_from_source;

    fn fragment(src: &str) -> FunctionFragment {
        extract_from_source("t.sol", src).fragments.remove(0)
    }

    const LISTING_INIT: &str = "function initialize() public {\n\tnew_owner = msg.sender;\n}";
    const LISTING_REENTRANCY: &str = "function externalSend(uint amountToSend) {\n\tif(balance >= amountToSend)\n\tmsg.sender.call.value(amountToSend)();\n\tbalance -= amountToSend; // state variable updated after external call\n}";

    #[test]
    fn pretty_print_initialize() {
        let nf = pretty_print(&fragment(LISTING_INIT));
        assert_eq!(
            nf.lines,
            ["function initialize ( ) public", "{", "new_owner = msg.sender ;", "}"]
        );
        assert_eq!(nf.mode, RenamingMode::None);
        assert_eq!(nf.line_digests.len(), 4);
    }

    #[test]
    fn layout_invariance() {
        let one_line = "function initialize()   public{new_owner=msg.sender;}";
        assert_eq!(
            pretty_print(&fragment(one_line)).lines,
            pretty_print(&fragment(LISTING_INIT)).lines
        );
    }

    #[test]
    fn comment_only_body() {
        let nf = pretty_print(&fragment("function f() public {\n // nothing\n /* here */\n}"));
        assert_eq!(nf.lines, ["function f ( ) public", "{", "}"]);
    }

    #[test]
    fn control_headers_and_for_loops() {
        let lines = pretty_lines(
            "function s() public returns (bool){ for(uint i=0;i<n;i++) { addresses.send(msg.sender); }    return true; }",
        );
        assert_eq!(
            lines,
            [
                "function s ( ) public returns ( bool )",
                "{",
                "for ( uint i = 0 ; i < n ; i ++ )",
                "{",
                "addresses.send ( msg.sender ) ;",
                "}",
                "return true ;",
                "}"
            ]
        );
        let lines = pretty_lines("if (a) x = 1; else if (b) y(); else z(); do { k(); } while (c);");
        assert_eq!(
            lines,
            ["if ( a )", "x = 1 ;", "else if ( b )", "y ( ) ;", "else", "z ( ) ;", "do", "{", "k ( ) ;", "}", "while ( c ) ;"]
        );
    }

    #[test]
    fn blind_renaming() {
        let nf = pretty_print(&fragment(LISTING_INIT));
        let blind = rename_blind(&nf).unwrap();
        assert_eq!(blind.lines[2], "X = msg.sender ;");
        assert_eq!(blind.lines[0], "function X ( ) public");
        let kill = pretty_print(&fragment("function kill(address malicious) external {\n    suicide(malicious);\n    }"));
        assert_eq!(rename_blind(&kill).unwrap().lines[2], "suicide ( X ) ;");
    }

    #[test]
    fn nothing_renamable() {
        let nf = pretty_print(&fragment("function() payable { require(msg.value > 0); }"));
        assert_eq!(rename_blind(&nf).unwrap().lines, nf.lines);
        assert_eq!(rename_consistent(&nf).unwrap().lines, nf.lines);
    }

    #[test]
    fn consistent_renaming_listing() {
        let nf = rename_consistent(&pretty_print(&fragment(LISTING_REENTRANCY))).unwrap();
        assert_eq!(
            nf.lines,
            [
                "function X0 ( uint X1 )",
                "{",
                "if ( X2 >= X1 )",
                "msg.sender.call.value ( X1 ) ( ) ;",
                "X2 -= X1 ;",
                "}"
            ]
        );
        let map = renaming_map(&nf);
        assert_eq!(map["amountToSend"], "X1");
        assert_eq!(map["balance"], "X2");
        assert_eq!(map["externalSend"], "X0");
    }

    #[test]
    fn single_identifier_many_uses() {
        let nf = rename_consistent(&pretty_print(&fragment(
            "function f() { a = a + a; a -= a; }",
        )))
        .unwrap();
        assert_eq!(nf.lines[2..4], ["X1 = X1 + X1 ;", "X1 -= X1 ;"]);
    }

    #[test]
    fn renaming_twice_is_mode_error() {
        let nf = rename_blind(&pretty_print(&fragment(LISTING_INIT))).unwrap();
        assert!(matches!(rename_blind(&nf), Err(Error::ModeError(RenamingMode::Blind))));
        assert!(matches!(rename_consistent(&nf), Err(Error::ModeError(RenamingMode::Blind))));
    }

    #[test]
    fn literals_and_types_survive() {
        let nf = normalize(
            &fragment("function f(uint256 amt, bytes32 h) { name = \"hello  world\"; x = 0x1F + 1e18 + 2.5 ether; }"),
            RenamingMode::Blind,
        );
        assert_eq!(nf.lines[0], "function X ( uint256 X , bytes32 X )");
        assert_eq!(nf.lines[2], "X = \"hello  world\" ;");
        assert_eq!(nf.lines[3], "X = 0x1F + 1e18 + 2.5 ether ;");
    }

    #[test]
    fn exemptions() {
        for w in ["uint", "uint8", "int256", "bytes32", "fixed128x18", "msg", "delegatecall", "suicide"] {
            assert!(is_exempt(w), "{w}");
        }
        for w in ["balance", "owner", "uintx", "delegateCall", "bytes_", "fixed128"] {
            assert!(!is_exempt(w), "{w}");
        }
    }

    #[test]
    fn mode_parse_display() {
        for m in RenamingMode::ALL {
            assert_eq!(m.to_string().parse::<RenamingMode>().unwrap(), m);
        }
        assert!("fuzzy".parse::<RenamingMode>().is_err());
    }
}
