use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use volcano::{CloneConfig, RenamingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::Text => "text",
        }
    }
}

pub fn parse_mode(s: &str) -> Result<RenamingMode, String> {
    s.parse()
}

/// Clone-matching flags shared by `clones`, `derive` and `scan`.
#[derive(Debug, Clone, Args)]
pub struct CloneArgs {
    /// Identifier renaming: none, blind or consistent.
    #[arg(long, default_value = "consistent", value_parser = parse_mode)]
    pub mode: RenamingMode,
    /// Maximum difference in whole percent (0-30).
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(0..=30))]
    pub threshold: u32,
    /// Smallest fragment, in normalized lines, taking part in matching.
    #[arg(long, default_value_t = CloneConfig::DEFAULT_MIN_LINES)]
    pub min_lines: usize,
    #[arg(long)]
    pub max_lines: Option<usize>,
}

impl CloneArgs {
    pub fn clone_config(&self) -> volcano::Result<CloneConfig> {
        CloneConfig::from_percent(self.mode, self.threshold)?
            .with_min_lines(self.min_lines)?
            .with_max_lines(self.max_lines)
    }
}

/// Everything an invocation was configured with, echoed into reports.
/// The explorer key is never recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub signatures: Option<String>,
    pub mode: RenamingMode,
    pub threshold_percent: u32,
    pub min_lines: usize,
    pub max_lines: Option<usize>,
    pub dedupe: bool,
    pub format: OutputFormat,
    pub omit_timing: bool,
}

impl RunConfig {
    /// Argument vector (without the program name) that reproduces this
    /// configuration for `scan`.
    pub fn to_scan_args(&self) -> Vec<String> {
        let mut args = vec![self.subcommand.clone()];
        let mut push = |flag: &str, value: String| {
            args.push(flag.to_string());
            args.push(value);
        };
        if let Some(p) = &self.input {
            push("--in", p.display().to_string());
        }
        if let Some(p) = &self.output {
            push("--out", p.display().to_string());
        }
        if let Some(s) = &self.signatures {
            push("--sigs", s.clone());
        }
        push("--mode", self.mode.to_string());
        push("--threshold", self.threshold_percent.to_string());
        push("--min-lines", self.min_lines.to_string());
        if let Some(m) = self.max_lines {
            push("--max-lines", m.to_string());
        }
        push("--format", self.format.as_str().to_string());
        if self.dedupe {
            args.push("--dedupe".into());
        }
        if self.omit_timing {
            args.push("--omit-timing".into());
        }
        args
    }
}
