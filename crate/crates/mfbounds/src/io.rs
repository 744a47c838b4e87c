//! Quote CSV and snapshot JSON, plus JSON for grids and measures.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use mfbounds_core::{
    ApproxMode, AtomicMeasure, ExtraQuote, Grid, MarketSnapshot, PayoffSpec, VanillaQuote,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}{}: {message}", field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
    Csv {
        line: u64,
        field: Option<String>,
        message: String,
    },

    #[error("line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },

    /// A quote parsed but broke a snapshot invariant; `line` is its CSV line
    /// when known.
    #[error("{}{source}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Market {
        line: Option<u64>,
        #[source]
        source: mfbounds_core::Error,
    },

    #[error("{0}")]
    Unsupported(String),
}

impl LoadError {
    /// The market-data error behind this failure, if any.
    pub fn market_error(&self) -> Option<&mfbounds_core::Error> {
        match self {
            LoadError::Market { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for LoadError {
    fn from(e: serde_json::Error) -> Self {
        LoadError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Csv,
    Json,
}

impl SnapshotFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(SnapshotFormat::Csv),
            "json" => Some(SnapshotFormat::Json),
            _ => None,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, LoadError> {
    fs::read(path).map_err(|source| LoadError::File { path: path.display().to_string(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), LoadError> {
    fs::write(path, bytes).map_err(|source| LoadError::File { path: path.display().to_string(), source })
}

pub fn load_snapshot(path: &Path, format: SnapshotFormat) -> Result<MarketSnapshot, LoadError> {
    let bytes = read_file(path)?;
    match format {
        SnapshotFormat::Csv => read_quotes_csv(bytes.as_slice(), None),
        SnapshotFormat::Json => snapshot_from_json(&bytes),
    }
}

pub fn save_snapshot(path: &Path, snapshot: &MarketSnapshot, format: SnapshotFormat) -> Result<(), LoadError> {
    let bytes = match format {
        SnapshotFormat::Csv => {
            let mut buf = Vec::new();
            write_quotes_csv(&mut buf, snapshot)?;
            buf
        }
        SnapshotFormat::Json => snapshot_to_json(snapshot).into_bytes(),
    };
    write_file(path, &bytes)
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    time_index: usize,
    strike: f64,
    bid: f64,
    ask: f64,
}

const CSV_HEADER: [&str; 4] = ["time_index", "strike", "bid", "ask"];

/// Reads `time_index,strike,bid,ask` rows. The number of dates is the
/// largest time index; the state box is `bounds` or `[0, 2 * max strike]`.
pub fn read_quotes_csv<R: Read>(reader: R, bounds: Option<(f64, f64)>) -> Result<MarketSnapshot, LoadError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if !headers.is_empty() && headers.iter().ne(CSV_HEADER) {
        return Err(LoadError::Csv {
            line: 1,
            field: None,
            message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut quotes = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let row: CsvRow = record.deserialize(Some(&headers)).map_err(|e| {
            let field = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => {
                    err.field().and_then(|i| CSV_HEADER.get(i as usize)).map(|s| s.to_string())
                }
                _ => None,
            };
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.kind().to_string(),
                _ => e.to_string(),
            };
            LoadError::Csv { line, field, message }
        })?;
        if row.time_index == 0 {
            return Err(LoadError::Csv {
                line,
                field: Some("time_index".into()),
                message: "time indices start at 1".into(),
            });
        }
        quotes.push(VanillaQuote::new(row.time_index, row.strike, row.bid, row.ask));
        lines.push(line);
    }
    let n_times = quotes.iter().map(|q| q.time_index).max().unwrap_or(1);
    let snapshot = match bounds {
        Some((lo, hi)) => MarketSnapshot::new(n_times, quotes, Vec::new(), lo, hi),
        None => MarketSnapshot::with_default_bounds(n_times, quotes),
    };
    snapshot.map_err(|source| {
        let line = match &source {
            mfbounds_core::Error::InvalidQuote { index, .. } => lines.get(*index).copied(),
            _ => None,
        };
        LoadError::Market { line, source }
    })
}

fn csv_error(e: csv::Error) -> LoadError {
    let line = e.position().map_or(0, |p| p.line());
    LoadError::Csv { line, field: None, message: e.to_string() }
}

fn default_upper(snapshot: &MarketSnapshot) -> f64 {
    2.0 * snapshot.quotes().iter().map(|q| q.strike).fold(0.0, f64::max)
}

/// Writes the quotes as CSV. Refuses snapshots the CSV cannot carry (extra
/// quotes, or a state box other than the default).
pub fn write_quotes_csv<W: Write>(writer: W, snapshot: &MarketSnapshot) -> Result<(), LoadError> {
    if !snapshot.extras().is_empty() {
        return Err(LoadError::Unsupported("extra quotes cannot be written to the quote CSV; use JSON".into()));
    }
    if snapshot.state_lower_bound() != 0.0 || snapshot.state_upper_bound() != default_upper(snapshot) {
        return Err(LoadError::Unsupported("a non-default state box cannot be written to the quote CSV; use JSON".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| LoadError::Csv { line: 0, field: None, message: e.to_string() };
    w.write_record(CSV_HEADER).map_err(io)?;
    for q in snapshot.quotes() {
        w.write_record([
            q.time_index.to_string(),
            q.strike.to_string(),
            q.bid.to_string(),
            q.ask.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotFile {
    pub n_times: usize,
    pub state_bounds: [f64; 2],
    pub quotes: Vec<VanillaQuote>,
    #[serde(default)]
    pub extras: Vec<ExtraQuoteFile>,
}

/// An extra quote; a missing side is `null`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraQuoteFile {
    pub payoff: PayoffSpec,
    pub bid: Option<f64>,
    pub ask: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approximation: Option<ApproxMode>,
}

impl From<&MarketSnapshot> for SnapshotFile {
    fn from(s: &MarketSnapshot) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        SnapshotFile {
            n_times: s.n_times(),
            state_bounds: [s.state_lower_bound(), s.state_upper_bound()],
            quotes: s.quotes().to_vec(),
            extras: s
                .extras()
                .iter()
                .map(|e| ExtraQuoteFile {
                    payoff: e.payoff.clone(),
                    bid: finite(e.bid),
                    ask: finite(e.ask),
                    approximation: e.approximation,
                })
                .collect(),
        }
    }
}

impl TryFrom<SnapshotFile> for MarketSnapshot {
    type Error = mfbounds_core::Error;

    fn try_from(f: SnapshotFile) -> Result<Self, Self::Error> {
        let extras = f
            .extras
            .into_iter()
            .map(|e| ExtraQuote {
                payoff: e.payoff,
                bid: e.bid.unwrap_or(f64::NEG_INFINITY),
                ask: e.ask.unwrap_or(f64::INFINITY),
                approximation: e.approximation,
            })
            .collect();
        MarketSnapshot::new(f.n_times, f.quotes, extras, f.state_bounds[0], f.state_bounds[1])
    }
}

pub fn snapshot_to_json(snapshot: &MarketSnapshot) -> String {
    let mut s = serde_json::to_string_pretty(&SnapshotFile::from(snapshot)).expect("snapshot serializes");
    s.push('\n');
    s
}

pub fn snapshot_from_json(bytes: &[u8]) -> Result<MarketSnapshot, LoadError> {
    let file: SnapshotFile = serde_json::from_slice(bytes)?;
    MarketSnapshot::try_from(file).map_err(|source| LoadError::Market { line: None, source })
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    points: Vec<Vec<f64>>,
}

pub fn grid_to_json(grid: &Grid) -> String {
    serde_json::to_string_pretty(&GridFile { points: grid.all_points().to_vec() }).expect("grid serializes")
}

/// Parses and validates a grid.
pub fn grid_from_json(bytes: &[u8]) -> Result<Grid, LoadError> {
    let file: GridFile = serde_json::from_slice(bytes)?;
    Grid::new(file.points).map_err(|source| LoadError::Market { line: None, source })
}

pub fn measure_to_json(measure: &AtomicMeasure) -> String {
    serde_json::to_string_pretty(measure).expect("measure serializes")
}

pub fn measure_from_json(bytes: &[u8]) -> Result<AtomicMeasure, LoadError> {
    Ok(serde_json::from_slice(bytes)?)
}
