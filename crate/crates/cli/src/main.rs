mod config;
mod render;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use volcano::cache::{analyze_corpus, run_with_cache, AnalysisCache, CACHE_DIR};
use volcano::corpus::{dedupe, load_corpus, sort_by_version};
use volcano::detector::{analyze_evolution, default_evolution_runs, scan};
use volcano::extractor::extract_functions;
use volcano::fetch::{validate_address, ExplorerClient, DEFAULT_EXPLORER_URL};
use volcano::normalize::normalize;
use volcano::signatures::{builtin_signatures, derive_signatures, load_signatures};
use volcano::{CloneConfig, Corpus, RenamingMode, SignatureSet, SourceContract, VulnerabilityType, Warning};

use config::{parse_mode, CloneArgs, OutputFormat, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "volcano", version, about = "Clone-based vulnerability scanner for Solidity")]
struct Cli {
    /// Worker threads for extraction and matching.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download verified sources from a block explorer.
    Fetch {
        #[arg(long = "address", value_parser = parse_address)]
        addresses: Vec<String>,
        /// File with one address per line.
        #[arg(long)]
        addresses_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Explorer API base; the key is read from VOLCANO_EXPLORER_KEY.
        #[arg(long, default_value = DEFAULT_EXPLORER_URL)]
        explorer_url: String,
    },
    /// List the functions found in a file or directory.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        /// Print fragments as JSON, raw lines included.
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the normalized form of every function.
    Normalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "consistent", value_parser = parse_mode)]
        mode: RenamingMode,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clone pairs and classes within one corpus.
    Clones {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        clone: CloneArgs,
        #[arg(long)]
        no_cache: bool,
        #[arg(long, default_value = CACHE_DIR)]
        cache_dir: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a labeled vulnerability corpus into a signature set.
    Derive {
        /// CSV with columns contract_id,vuln_type.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory receiving the signature files, manifest and review.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        clone: CloneArgs,
    },
    /// Match a corpus against a signature set.
    Scan {
        /// `builtin` or a signature file or directory.
        #[arg(long, default_value = "builtin")]
        sigs: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        clone: CloneArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drop contracts whose bytes duplicate an earlier one.
        #[arg(long)]
        dedupe: bool,
        /// Leave the timing section out of the report.
        #[arg(long)]
        omit_timing: bool,
    },
    /// Per-version scan statistics.
    Evolve {
        #[arg(long, default_value = "builtin")]
        sigs: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// MODE:PERCENT, repeatable. Defaults to blind:0 and consistent:30.
        #[arg(long = "run", value_parser = parse_run)]
        runs: Vec<CloneConfig>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the corpus manifest (id, digest, version bucket, path).
    Manifest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manage the incremental analysis cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    Clear {
        #[arg(long, default_value = CACHE_DIR)]
        cache_dir: PathBuf,
    },
}

/// Configuration problems detected after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_address(s: &str) -> Result<String, String> {
    validate_address(s).map_err(|e| e.to_string())
}

fn parse_run(s: &str) -> Result<CloneConfig, String> {
    let (mode, pct) = s.split_once(':').ok_or("expected MODE:PERCENT")?;
    let pct: u32 = pct.parse().map_err(|_| format!("bad percent `{pct}`"))?;
    if pct > 30 {
        return Err(format!("percent {pct} not in 0..=30"));
    }
    CloneConfig::from_percent(parse_mode(mode)?, pct).map_err(|e| e.to_string())
}

fn clone_config(args: &CloneArgs) -> anyhow::Result<CloneConfig> {
    args.clone_config().map_err(|e| UsageError(e.to_string()).into())
}

fn warn_all(warnings: &[Warning]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

/// A directory tree, or a single file as a one-contract corpus.
fn load_input(path: &Path, label: &str) -> anyhow::Result<Corpus> {
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let id = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        return Ok(Corpus::new(label, vec![SourceContract::new(id, text).with_path(path)]));
    }
    let outcome = load_corpus(path, label)?;
    warn_all(&outcome.warnings);
    Ok(outcome.corpus)
}

fn load_sigs(spec: &str) -> anyhow::Result<SignatureSet> {
    let set = if spec == "builtin" {
        builtin_signatures()
    } else {
        load_signatures(Path::new(spec))?
    };
    if set.is_empty() {
        bail!("signature set `{spec}` is empty");
    }
    Ok(set)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn to_json(value: &impl serde::Serialize) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    contract_id: String,
    vuln_type: String,
}

fn read_labels(path: &Path) -> anyhow::Result<BTreeMap<String, VulnerabilityType>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut labels = BTreeMap::new();
    for row in reader.deserialize() {
        let row: LabelRow = row.with_context(|| format!("parsing {}", path.display()))?;
        labels.insert(row.contract_id, row.vuln_type.parse()?);
    }
    Ok(labels)
}

/// Configuration echo for a `scan` invocation.
fn scan_run_config(command: &Command) -> Option<RunConfig> {
    let Command::Scan {
        sigs,
        input,
        clone,
        format,
        out,
        dedupe,
        omit_timing,
    } = command
    else {
        return None;
    };
    Some(RunConfig {
        subcommand: "scan".into(),
        input: Some(input.clone()),
        output: out.clone(),
        signatures: Some(sigs.clone()),
        mode: clone.mode,
        threshold_percent: clone.threshold,
        min_lines: clone.min_lines,
        max_lines: clone.max_lines,
        dedupe: *dedupe,
        format: *format,
        omit_timing: *omit_timing,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let scan_config = scan_run_config(&cli.command);
    match cli.command {
        Command::Fetch {
            mut addresses,
            addresses_file,
            out,
            explorer_url,
        } => {
            if let Some(file) = addresses_file {
                let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
                for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
                    addresses.push(parse_address(line).map_err(UsageError)?);
                }
            }
            if addresses.is_empty() {
                return Err(UsageError("no addresses given (use --address or --addresses-file)".into()).into());
            }
            let mut client = ExplorerClient::from_env(explorer_url)?;
            let mut failed = 0;
            for address in &addresses {
                match client.fetch_to(address, &out) {
                    Ok(f) => println!("{} -> {} ({} bytes)", f.address, f.path.display(), f.bytes),
                    Err(e) => {
                        failed += 1;
                        eprintln!("error: {e}");
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} addresses failed", addresses.len());
            }
        }
        Command::Extract { input, dump, out } => {
            let corpus = load_input(&input, "extract")?;
            let mut fragments = Vec::new();
            for c in &corpus.contracts {
                let ex = extract_functions(c);
                warn_all(&ex.warnings);
                fragments.extend(ex.fragments);
            }
            let text = if dump {
                to_json(&fragments)?
            } else {
                fragments.iter().map(|f| format!("{}\n", f.reference())).collect()
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Normalize {
            input,
            mode,
            format,
            out,
        } => {
            let corpus = load_input(&input, "normalize")?;
            let mut normalized = Vec::new();
            for c in &corpus.contracts {
                let ex = extract_functions(c);
                warn_all(&ex.warnings);
                normalized.extend(ex.fragments.iter().map(|f| normalize(f, mode)));
            }
            let text = match format {
                OutputFormat::Json => to_json(&normalized)?,
                OutputFormat::Text => normalized
                    .iter()
                    .map(|n| format!("== {} ({mode})\n{}\n", n.origin, n.lines.join("\n")))
                    .collect(),
                OutputFormat::Csv => return Err(UsageError("normalize supports json or text".into()).into()),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Clones {
            input,
            clone,
            no_cache,
            cache_dir,
            format,
            out,
        } => {
            let cfg = clone_config(&clone)?;
            let corpus = load_input(&input, "clones")?;
            let report = if no_cache {
                analyze_corpus(&corpus, &cfg)?.0
            } else {
                let run = run_with_cache(&corpus, &cfg, &cache_dir)?;
                warn_all(&run.warnings);
                eprintln!("cache: re-analyzed {} of {} contracts", run.reanalyzed, corpus.len());
                run.report
            };
            let text = match format {
                OutputFormat::Json => report.to_canonical_json() + "\n",
                OutputFormat::Text => render::clones_text(&report),
                OutputFormat::Csv => return Err(UsageError("clones supports json or text".into()).into()),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Derive {
            labels,
            input,
            out,
            clone,
        } => {
            let cfg = clone_config(&clone)?;
            let corpus = load_input(&input, "vulnerability")?;
            let labels = read_labels(&labels)?;
            let derivation = derive_signatures(&corpus, &labels, &cfg)?;
            warn_all(&derivation.warnings);
            derivation.set.save(&out)?;
            std::fs::write(out.join("review.json"), to_json(&derivation.review)?)?;
            println!(
                "derived {} signatures into {} ({} mixed-label classes in review.json)",
                derivation.set.len(),
                out.display(),
                derivation.review.len()
            );
        }
        Command::Scan {
            sigs,
            input,
            clone,
            format,
            out,
            dedupe: dedupe_input,
            omit_timing,
        } => {
            let cfg = clone_config(&clone)?;
            let run_config = scan_config.expect("scan command");
            let set = load_sigs(&sigs)?;
            let mut corpus = load_input(&input, "target")?;
            if dedupe_input {
                corpus = dedupe(&corpus);
            }
            let report = scan(&corpus, &set, &cfg)?;
            warn_all(&report.warnings);
            let text = match format {
                OutputFormat::Json => {
                    let mut value = serde_json::to_value(&report)?;
                    let obj = value.as_object_mut().expect("report is an object");
                    obj.insert("run".into(), serde_json::to_value(&run_config)?);
                    let mut rerun = vec!["volcano".to_string()];
                    rerun.extend(run_config.to_scan_args());
                    obj.insert("rerun".into(), serde_json::to_value(rerun)?);
                    if omit_timing {
                        obj.remove("timing");
                    }
                    to_json(&value)?
                }
                OutputFormat::Csv => render::catalog_csv(&report)?,
                OutputFormat::Text => render::scan_text(&report, set.len(), !omit_timing),
            };
            emit(out.as_deref(), &text)?;
            if !omit_timing && format != OutputFormat::Text {
                eprintln!("{}", render::emit_timing(&report.timing, report.contracts_scanned));
            }
        }
        Command::Evolve {
            sigs,
            input,
            runs,
            format,
            out,
        } => {
            let set = load_sigs(&sigs)?;
            let corpus = load_input(&input, "evaluation")?;
            let runs = if runs.is_empty() { default_evolution_runs() } else { runs };
            let report = analyze_evolution(&sort_by_version(&corpus), &set, &runs)?;
            if !report.cross_bucket_classes.is_empty() {
                eprintln!(
                    "note: {} classes only form across buckets and are not in the per-bucket counts",
                    report.cross_bucket_classes.len()
                );
            }
            let text = match format {
                OutputFormat::Csv => render::evolution_csv(&report)?,
                OutputFormat::Json => to_json(&report)?,
                OutputFormat::Text => render::evolution_text(&report),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Manifest { input, out } => {
            let corpus = load_input(&input, "manifest")?;
            emit(out.as_deref(), &to_json(&corpus.manifest())?)?;
        }
        Command::Cache {
            action: CacheAction::Clear { cache_dir },
        } => {
            if AnalysisCache::clear(&cache_dir)? {
                println!("removed {}", cache_dir.display());
            } else {
                println!("no cache at {}", cache_dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
