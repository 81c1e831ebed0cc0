use std::fmt::Write as _;

use volcano::cache::CloneReport;
use volcano::detector::{EvolutionReport, ScanReport, Timing};
use volcano::{RenamingMode, VulnerabilityType};

/// `HH:MM:SS`, truncating sub-second remainders.
pub fn hms(ms: f64) -> String {
    let secs = (ms / 1000.0).floor().max(0.0) as u64;
    format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60)
}

fn ms_label(ms: f64) -> String {
    if ms >= 100.0 || ms == ms.trunc() {
        format!("{ms:.0}ms")
    } else {
        format!("{ms:.3}ms")
    }
}

pub fn emit_timing(timing: &Timing, contracts: usize) -> String {
    let average = match timing.average_ms {
        Some(avg) => format!("{} ({})", hms(avg), ms_label(avg)),
        None => "NA".to_string(),
    };
    format!(
        "timing: {contracts} contracts, average {average}, total {} ({})",
        hms(timing.total_ms),
        ms_label(timing.total_ms)
    )
}

pub fn percent(similarity: f64) -> String {
    format!("{:.1}%", similarity * 100.0)
}

pub fn catalog_csv(report: &ScanReport) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["contract_id", "vuln_type", "sig_id", "function", "lines", "similarity", "solidity_bucket"])?;
    for d in &report.detections {
        w.write_record([
            d.contract_id.as_str(),
            d.vuln_type.as_str(),
            &d.sig_id,
            &d.function,
            &format!("{}-{}", d.start_line, d.end_line),
            &format!("{:.4}", d.similarity),
            &d.solidity_bucket.label(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn scan_text(report: &ScanReport, signatures: usize, with_timing: bool) -> String {
    let mut out = String::new();
    let cfg = &report.config;
    let _ = writeln!(
        out,
        "scanned {} contracts ({} fragments) against {signatures} signatures, mode {}, threshold {}%",
        report.contracts_scanned,
        report.fragments_scanned,
        cfg.mode(),
        cfg.max_difference_bp() / 100
    );
    let _ = writeln!(out, "\n{:<28}{:>10}", "vulnerability", "instances");
    for t in VulnerabilityType::ALL {
        let _ = writeln!(out, "{:<28}{:>10}", t.label(), report.per_type_instances.get(&t).copied().unwrap_or(0));
    }
    let _ = writeln!(out, "\n{} detections in {} cross classes", report.detections.len(), report.classes.len());
    for d in &report.detections {
        let _ = writeln!(
            out,
            "  {}:{}-{} {}  {} ({})  {}",
            d.contract_id,
            d.start_line,
            d.end_line,
            d.function,
            d.sig_id,
            d.vuln_type,
            percent(d.similarity)
        );
    }
    if with_timing {
        let _ = writeln!(out, "\n{}", emit_timing(&report.timing, report.contracts_scanned));
    }
    out
}

pub fn clones_text(report: &CloneReport) -> String {
    let mut out = format!("{} clone pairs in {} classes\n", report.pairs.len(), report.classes.len());
    for class in &report.classes {
        let _ = writeln!(out, "class {} ({} members)", class.class_id, class.members.len());
        for m in &class.members {
            let _ = writeln!(out, "  {m}");
        }
    }
    out
}

pub fn evolution_csv(report: &EvolutionReport) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bucket", "vuln_type", "mode", "threshold", "class_count", "detections", "min_similarity"])?;
    for c in &report.cells {
        w.write_record([
            c.bucket.label().as_str(),
            c.vuln_type.as_str(),
            &c.mode.to_string(),
            &format!("{}%", (c.max_difference * 100.0).round() as u32),
            &c.class_count.to_string(),
            &c.detections.to_string(),
            &c.min_similarity_label(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn evolution_text(report: &EvolutionReport) -> String {
    let mut out = String::new();
    let modes: Vec<RenamingMode> = report.runs.iter().map(|r| r.mode()).collect();
    for (run, mode) in report.runs.iter().zip(&modes) {
        let _ = writeln!(out, "lowest similarity, {mode} at {}%", run.max_difference_bp() / 100);
        out.push_str(&report.min_similarity_table(*mode));
        out.push('\n');
    }
    let _ = writeln!(out, "{} classes span more than one bucket", report.cross_bucket_classes.len());
    out
}
