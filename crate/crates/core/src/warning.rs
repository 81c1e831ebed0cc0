use std::fmt;
use std::path::PathBuf;

/// Non-fatal conditions collected while a stage runs. Callers decide whether
/// to print them; the CLI sends them to stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    EmptyCorpus { root: PathBuf },
    NonUtf8 { path: PathBuf },
    EmptyFile { path: PathBuf },
    UnterminatedComment { line: u32 },
    UnterminatedString { line: u32 },
    ExtractionIncomplete { contract_id: String, line: u32 },
    CacheCorrupt { path: PathBuf, reason: String },
    EmptySignatureSet,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::EmptyCorpus { root } => {
                write!(f, "no .sol files admitted under {}", root.display())
            }
            Warning::NonUtf8 { path } => write!(f, "skipped non-UTF-8 file {}", path.display()),
            Warning::EmptyFile { path } => write!(f, "skipped empty file {}", path.display()),
            Warning::UnterminatedComment { line } => {
                write!(f, "unterminated block comment starting at line {line}")
            }
            Warning::UnterminatedString { line } => {
                write!(f, "unterminated string literal starting at line {line}")
            }
            Warning::ExtractionIncomplete { contract_id, line } => write!(
                f,
                "{contract_id}: unbalanced braces from line {line}, rest of file skipped"
            ),
            Warning::CacheCorrupt { path, reason } => write!(
                f,
                "cache {} unreadable ({reason}); falling back to full analysis",
                path.display()
            ),
            Warning::EmptySignatureSet => write!(f, "no clone class qualified as a signature"),
        }
    }
}
