//! Report JSON and table rows emitted by the command line tool.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use mfbounds_core::engine::{GridSummary, SideStats};
use mfbounds_core::{BoundsReport, HedgeCertificate, Verdict};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

impl InputHash {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        InputHash { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(bytes)) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub lower: HedgeCertificate,
    pub upper: HedgeCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solver {
    pub lower: SideStats,
    pub upper: SideStats,
}

/// Everything needed to rerun a computation: the configuration and the
/// hashes of every file it read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub payoff: String,
    pub lower: f64,
    pub upper: f64,
    pub bs_reference: Option<f64>,
    pub bs_reference_std_error: Option<f64>,
    pub gap_vs_oracle: Option<f64>,
    pub certificate: Certificates,
    pub verdict: Option<Verdict>,
    pub grid: GridSummary,
    pub solver: Solver,
    pub warnings: Vec<String>,
    pub run: ConfigEcho,
}

impl ReportFile {
    pub fn new(report: BoundsReport, run: ConfigEcho) -> Self {
        ReportFile {
            payoff: report.payoff,
            lower: report.lower,
            upper: report.upper,
            bs_reference: report.bs_reference.map(|r| r.value),
            bs_reference_std_error: report.bs_reference.and_then(|r| r.std_error),
            gap_vs_oracle: report.gap_vs_oracle,
            certificate: Certificates { lower: report.lower_certificate, upper: report.upper_certificate },
            verdict: report.verdict,
            grid: report.grid,
            solver: Solver { lower: report.lower_stats, upper: report.upper_stats },
            warnings: report.warnings,
            run,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Header and row printed by `bounds`.
pub fn summary_row(report: &BoundsReport, with_gap: bool) -> (String, String) {
    let mut header = String::from("payoff,lower,upper,bs_reference");
    let mut row = format!(
        "{},{},{},{}",
        report.payoff,
        report.lower,
        report.upper,
        cell(report.bs_reference.map(|r| r.value))
    );
    if with_gap {
        header.push_str(",gap");
        row.push(',');
        row.push_str(&cell(report.gap_vs_oracle));
    }
    (header, row)
}

pub const TABLE_HEADER: &str = "payoff,steps,lower,upper,reference";

pub fn table_row(report: &BoundsReport, steps: usize) -> String {
    format!(
        "{},{},{},{},{}",
        report.payoff,
        steps,
        report.lower,
        report.upper,
        cell(report.bs_reference.map(|r| r.value))
    )
}

/// Appends a row to a plot table, writing the header first when the file
/// is new or empty.
pub fn append_table_row(path: &Path, row: &str) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if f.metadata()?.len() == 0 {
        writeln!(f, "{TABLE_HEADER}")?;
    }
    writeln!(f, "{row}")
}
