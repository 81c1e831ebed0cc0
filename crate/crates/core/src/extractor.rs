//! Function-granularity fragment extraction.
//!
//! Solidity changed syntax a lot between 0.3 and 0.8, so instead of a grammar
//! this scans a masked copy of the source (comments and string literals
//! blanked out) for declaration keywords and matches braces.

use serde::{Deserialize, Serialize};

use crate::clone_engine::FragmentRef;
use crate::corpus::SourceContract;
use crate::warning::Warning;

/// One extracted function, constructor or modifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionFragment {
    pub contract_id: String,
    /// Function name, or one of `<fallback>`, `<receive>`, `<constructor>`,
    /// `<modifier:NAME>`.
    pub name: String,
    /// 1-based, inclusive.
    pub start_line: u32,
    pub end_line: u32,
    /// Whole physical source lines `start_line..=end_line`.
    pub raw_lines: Vec<String>,
    /// Byte column of the declaration keyword in the first line.
    pub start_col: usize,
    /// Byte column just past the closing brace in the last line.
    pub end_col: usize,
}

impl FunctionFragment {
    pub fn reference(&self) -> FragmentRef {
        FragmentRef {
            contract_id: self.contract_id.clone(),
            name: self.name.clone(),
            start_line: self.start_line,
            end_line: self.end_line,
        }
    }

    /// Exact source text from the declaration keyword to the closing brace.
    pub fn body_text(&self) -> String {
        let last = self.raw_lines.len() - 1;
        if last == 0 {
            return self.raw_lines[0][self.start_col..self.end_col].to_string();
        }
        let mut out = String::new();
        out.push_str(&self.raw_lines[0][self.start_col..]);
        for line in &self.raw_lines[1..last] {
            out.push('\n');
            out.push_str(line);
        }
        out.push('\n');
        out.push_str(&self.raw_lines[last][..self.end_col]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masked {
    pub text: String,
    pub warnings: Vec<Warning>,
}

/// Blanks comments and string literals to spaces. Byte length and newlines
/// are preserved, so offsets and line numbers carry over to the original.
pub fn mask_comments_and_strings(source_text: &str) -> Masked {
    let (text, warnings) = mask(source_text, true);
    Masked { text, warnings }
}

/// Blanks comments only; string literals are kept verbatim.
pub fn strip_comments(source_text: &str) -> String {
    mask(source_text, false).0
}

fn mask(source: &str, mask_strings: bool) -> (String, Vec<Warning>) {
    enum State {
        Code,
        Line,
        Block(u32),
        Str(u8, u32),
    }

    let bytes = source.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut warnings = Vec::new();
    let mut state = State::Code;
    let mut line = 1u32;
    let mut i = 0;
    let blank = |b: u8| if b == b'\n' { b'\n' } else { b' ' };

    while i < bytes.len() {
        let b = bytes[i];
        let next = bytes.get(i + 1).copied();
        match state {
            State::Code => match (b, next) {
                (b'/', Some(b'/')) => {
                    state = State::Line;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                (b'/', Some(b'*')) => {
                    state = State::Block(line);
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                (b'"' | b'\'', _) => {
                    state = State::Str(b, line);
                    out.push(b);
                }
                _ => out.push(b),
            },
            State::Line => {
                if b == b'\n' {
                    state = State::Code;
                }
                out.push(blank(b));
            }
            State::Block(_) => {
                if b == b'*' && next == Some(b'/') {
                    state = State::Code;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                out.push(blank(b));
            }
            State::Str(quote, start) => {
                if b == quote {
                    state = State::Code;
                    out.push(b);
                } else if b == b'\n' {
                    // String literals cannot span lines; resync at the newline.
                    warnings.push(Warning::UnterminatedString { line: start });
                    state = State::Code;
                    out.push(b);
                } else if b == b'\\' && next.is_some_and(|n| n != b'\n') {
                    if mask_strings {
                        out.extend_from_slice(b"  ");
                    } else {
                        out.push(b);
                        out.push(next.unwrap());
                    }
                    i += 2;
                    continue;
                } else {
                    out.push(if mask_strings { blank(b) } else { b });
                }
            }
        }
        if b == b'\n' {
            line += 1;
        }
        i += 1;
    }
    match state {
        State::Block(start) => warnings.push(Warning::UnterminatedComment { line: start }),
        State::Str(_, start) => warnings.push(Warning::UnterminatedString { line: start }),
        _ => {}
    }
    // Only whole characters inside ASCII-delimited regions were replaced.
    let text = String::from_utf8(out).expect("masking keeps UTF-8 boundaries");
    (text, warnings)
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub fragments: Vec<FunctionFragment>,
    pub warnings: Vec<Warning>,
}

pub(crate) fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b == b'$'
}

pub(crate) fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

/// Extracts every function, constructor, fallback/receive and modifier that
/// has a body, in source order.
pub fn extract_functions(contract: &SourceContract) -> Extraction {
    extract_from_source(&contract.id, &contract.source_text)
}

pub fn extract_from_source(contract_id: &str, source: &str) -> Extraction {
    let masked = mask_comments_and_strings(source);
    let m = masked.text.as_bytes();
    let line_starts: Vec<usize> = std::iter::once(0)
        .chain(source.match_indices('\n').map(|(i, _)| i + 1))
        .collect();
    let line_of = |offset: usize| -> u32 {
        (line_starts.partition_point(|&s| s <= offset)) as u32
    };
    let lines: Vec<&str> = source.split('\n').collect();

    let mut out = Extraction {
        fragments: Vec::new(),
        warnings: masked.warnings,
    };
    let mut i = 0;
    while i < m.len() {
        if !is_ident_start(m[i]) || (i > 0 && is_ident_continue(m[i - 1])) {
            i += 1;
            continue;
        }
        let word_end = scan_ident(m, i);
        let word = &masked.text[i..word_end];
        let is_keyword = matches!(
            word,
            "function" | "constructor" | "modifier" | "fallback" | "receive"
        );
        if !is_keyword || !at_declaration_position(m, i) {
            i = word_end;
            continue;
        }
        let Some(name) = declared_name(&masked.text, word, word_end) else {
            i = word_end;
            continue;
        };
        match find_body(m, word_end) {
            Header::Body(open) => match match_brace(m, open) {
                Some(close) => {
                    let start_line = line_of(i);
                    let end_line = line_of(close);
                    let start_col = i - line_starts[start_line as usize - 1];
                    let end_col = close + 1 - line_starts[end_line as usize - 1];
                    out.fragments.push(FunctionFragment {
                        contract_id: contract_id.to_string(),
                        name,
                        start_line,
                        end_line,
                        raw_lines: lines[start_line as usize - 1..end_line as usize]
                            .iter()
                            .map(|s| s.to_string())
                            .collect(),
                        start_col,
                        end_col,
                    });
                    i = close + 1;
                }
                None => {
                    out.warnings.push(Warning::ExtractionIncomplete {
                        contract_id: contract_id.to_string(),
                        line: line_of(i),
                    });
                    break;
                }
            },
            Header::NoBody(end) => i = end + 1,
            Header::Malformed => i = word_end,
        }
    }
    out
}

fn scan_ident(m: &[u8], start: usize) -> usize {
    let mut j = start;
    while j < m.len() && is_ident_continue(m[j]) {
        j += 1;
    }
    j
}

fn skip_ws(m: &[u8], mut j: usize) -> usize {
    while j < m.len() && m[j].is_ascii_whitespace() {
        j += 1;
    }
    j
}

/// A declaration starts a file or follows `;`, `{` or `}`.
fn at_declaration_position(m: &[u8], at: usize) -> bool {
    m[..at]
        .iter()
        .rev()
        .find(|b| !b.is_ascii_whitespace())
        .is_none_or(|b| matches!(b, b';' | b'{' | b'}'))
}

fn declared_name(masked: &str, keyword: &str, after: usize) -> Option<String> {
    let m = masked.as_bytes();
    let j = skip_ws(m, after);
    let next = m.get(j).copied();
    match keyword {
        "function" => match next {
            Some(b'(') => Some("<fallback>".to_string()),
            Some(b) if is_ident_start(b) => Some(masked[j..scan_ident(m, j)].to_string()),
            _ => None,
        },
        "modifier" => match next {
            Some(b) if is_ident_start(b) => {
                Some(format!("<modifier:{}>", &masked[j..scan_ident(m, j)]))
            }
            _ => None,
        },
        "constructor" => (next == Some(b'(')).then(|| "<constructor>".to_string()),
        "fallback" => (next == Some(b'(')).then(|| "<fallback>".to_string()),
        "receive" => (next == Some(b'(')).then(|| "<receive>".to_string()),
        _ => None,
    }
}

enum Header {
    Body(usize),
    NoBody(usize),
    Malformed,
}

fn find_body(m: &[u8], from: usize) -> Header {
    let mut depth = 0i32;
    for (j, &b) in m.iter().enumerate().skip(from) {
        match b {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            b'{' if depth <= 0 => return Header::Body(j),
            b';' if depth <= 0 => return Header::NoBody(j),
            b'}' if depth <= 0 => return Header::Malformed,
            _ => {}
        }
    }
    Header::Malformed
}

fn match_brace(m: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, &b) in m.iter().enumerate().skip(open) {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(src: &str) -> Vec<String> {
        extract_from_source("c", src)
            .fragments
            .into_iter()
            .map(|f| f.name)
            .collect()
    }

    #[test]
    fn masks_line_comment() {
        let m = mask_comments_and_strings("a = 1; // } stray brace");
        assert_eq!(m.text, format!("a = 1; {}", " ".repeat(16)));
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn masks_string() {
        let m = mask_comments_and_strings(r#"s = "}{";"#);
        assert_eq!(m.text, r#"s = "  ";"#);
    }

    #[test]
    fn mask_identity_without_comments() {
        let src = "contract A {\n  uint x = 1;\n}\n";
        assert_eq!(mask_comments_and_strings(src).text, src);
    }

    #[test]
    fn mask_preserves_length_and_newlines_with_multibyte() {
        let src = "x; /* ünïcödé\n } */ y = 'é\\'}';\n// ✓ }\nz;";
        let m = mask_comments_and_strings(src);
        assert_eq!(m.text.len(), src.len());
        assert_eq!(m.text.matches('\n').count(), src.matches('\n').count());
        assert!(!m.text.contains('}'));
        assert!(m.text.ends_with("z;"));
    }

    #[test]
    fn strip_comments_keeps_strings() {
        assert_eq!(
            strip_comments(r#"s = "//x"; // gone"#),
            format!(r#"s = "//x"; {}"#, "       ")
        );
    }

    #[test]
    fn unterminated_comment_and_string_warn() {
        let m = mask_comments_and_strings("a; /* open\nb;");
        assert_eq!(m.warnings, vec![Warning::UnterminatedComment { line: 1 }]);
        assert_eq!(m.text, "a;        \n  ");
        let m = mask_comments_and_strings("s = \"open\nfunction f() {}");
        assert_eq!(m.warnings, vec![Warning::UnterminatedString { line: 1 }]);
        assert!(m.text.ends_with("function f() {}"));
    }

    #[test]
    fn listing_initialize() {
        let src = "contract C {\nfunction initialize() public {\n\tnew_owner = msg.sender;\n}\n}\n";
        let ex = extract_from_source("c.sol", src);
        assert_eq!(ex.fragments.len(), 1);
        let f = &ex.fragments[0];
        assert_eq!(f.name, "initialize");
        assert_eq!((f.start_line, f.end_line), (2, 4));
        assert_eq!(f.raw_lines.len(), 3);
        assert_eq!(f.body_text(), "function initialize() public {\n\tnew_owner = msg.sender;\n}");
    }

    #[test]
    fn fallback_variants() {
        assert_eq!(names("function() payable { x(); }"), ["<fallback>"]);
        assert_eq!(
            names("contract A { fallback() external payable {} receive() external payable {} }"),
            ["<fallback>", "<receive>"]
        );
        assert_eq!(names("contract A { constructor() public { o = msg.sender; } }"), ["<constructor>"]);
        assert_eq!(
            names("contract A { modifier onlyOwner() { require(msg.sender == o); _; } }"),
            ["<modifier:onlyOwner>"]
        );
    }

    #[test]
    fn skips_bodiless_and_state_only() {
        assert!(names("contract A { uint x; mapping(address => uint) b; }").is_empty());
        assert!(names("interface I { function f(uint a) external returns (uint); }").is_empty());
        assert!(names("contract A { function (uint) external returns (uint) cb; }").is_empty());
    }

    #[test]
    fn ignores_keywords_in_comments_strings_and_calls() {
        let src = r#"
contract A {
    // function fake() { }
    string s = "function g() { }";
    function real() public {
        x.receive();
        emit E("}");
    }
}"#;
        assert_eq!(names(src), ["real"]);
    }

    #[test]
    fn nested_yul_function_attributed_to_outer() {
        let src = "function outer() { assembly { function inner(a) -> b { b := a } } }\nfunction next() {}";
        assert_eq!(names(src), ["outer", "next"]);
    }

    #[test]
    fn single_line_contract_columns() {
        let src = "contract A { function f() { a(); } function g() { b(); } }";
        let ex = extract_from_source("c", src);
        let bodies: Vec<String> = ex.fragments.iter().map(|f| f.body_text()).collect();
        assert_eq!(bodies, ["function f() { a(); }", "function g() { b(); }"]);
    }

    #[test]
    fn unbalanced_braces_warn_and_stop() {
        let ex = extract_from_source("c", "function ok() { }\nfunction broken() { if (x) {\n");
        assert_eq!(ex.fragments.len(), 1);
        assert_eq!(
            ex.warnings,
            vec![Warning::ExtractionIncomplete {
                contract_id: "c".into(),
                line: 2
            }]
        );
    }

    #[test]
    fn crlf_round_trip() {
        let src = "function f() {\r\n  a();\r\n}\r\n";
        let f = &extract_from_source("c", src).fragments[0];
        assert_eq!(f.raw_lines, ["function f() {\r", "  a();\r", "}\r"]);
        assert_eq!(f.body_text(), "function f() {\r\n  a();\r\n}");
    }
}
