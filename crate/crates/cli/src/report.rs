//! `report`: merges sub-run reports into one comparison table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use palmdeid::io::{read_json, write_atomic};

use crate::eval::{mean_std_cell, RunReport, REPORT_FILE};
use crate::{CliError, CliResult, ReportArgs};

pub const COLUMNS: [&str; 12] = [
    "run", "method", "fusion", "alpha", "DIR (%)", "band", "RR (%)", "EER (%)", "Acc. (%)", "SSIM", "MS-SSIM", "PSNR",
];

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(palmdeid::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Report files under `input`: itself, its `report.json`, then
/// `*/report.json` in name order.
pub fn collect_reports(input: &Path) -> CliResult<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut found = Vec::new();
    let own = input.join(REPORT_FILE);
    if own.is_file() {
        found.push(own);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| io_err(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_FILE).is_file())
        .collect();
    subdirs.sort();
    found.extend(subdirs.into_iter().map(|d| d.join(REPORT_FILE)));
    Ok(found)
}

/// One table row, cells in `COLUMNS` order.
pub fn row(r: &RunReport) -> Vec<String> {
    let m = &r.metrics;
    let (method, fusion, alpha) = match &r.config.deid {
        Some(c) => (
            c.baseline.map_or("diffusion", |b| b.name()).to_string(),
            c.fusion_set.to_string(),
            format!("{}", c.alpha),
        ),
        None => ("-".into(), "-".into(), "-".into()),
    };
    let band = serde_json::to_value(m.band)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    let q = |f: fn(&palmdeid::eval::QualitySummary) -> String| r.quality.as_ref().map_or("-".to_string(), f);
    vec![
        r.run.clone(),
        method,
        fusion,
        alpha,
        format!("{:.2}", m.dir_percent),
        band,
        format!("{:.2}", m.rr_percent),
        format!("{:.2}", m.eer_percent),
        m.accuracy_percent.map_or("-".into(), |a| format!("{a:.2}")),
        q(|s| mean_std_cell(&s.ssim, 4)),
        q(|s| mean_std_cell(&s.ms_ssim, 4)),
        q(|s| mean_std_cell(&s.psnr, 2)),
    ]
}

pub fn markdown(rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv(rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for r in std::iter::once(COLUMNS.iter().map(|c| c.to_string()).collect::<Vec<_>>()).chain(rows.iter().cloned()) {
        let _ = writeln!(out, "{}", r.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","));
    }
    out
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let mut files = Vec::new();
    for input in &args.inputs {
        files.extend(collect_reports(input)?);
    }
    if files.is_empty() {
        return Err(CliError::Usage("no report.json found under the given inputs".into()));
    }
    let rows = files
        .iter()
        .map(|f| read_json::<RunReport>(f).map(|r| row(&r)))
        .collect::<palmdeid::Result<Vec<_>>>()?;
    let table = markdown(&rows);
    print!("{table}");
    if let Some(out) = &args.out {
        write_atomic(&out.join("comparison.md"), table.as_bytes())?;
        write_atomic(&out.join("comparison.csv"), csv(&rows).as_bytes())?;
    }
    Ok(())
}
