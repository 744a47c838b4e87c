//! Run configuration shared by the commands and mirrored by the JSON
//! config file.

use std::path::PathBuf;

use mfbounds_core::{BoundsConfig, PayoffSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Parameters of a synthetic Black-Scholes market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub spot: f64,
    pub vol: f64,
    pub step: f64,
    pub times: usize,
    pub strikes: Vec<f64>,
    pub upper: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            spot: 50.0,
            vol: 0.3,
            step: 0.5,
            times: 2,
            strikes: strike_range(30.0, 2.0, 60.0).expect("default ladder"),
            upper: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Snapshot JSON.
    pub snapshot: Option<PathBuf>,
    /// Quote CSV.
    pub quotes: Option<PathBuf>,
    /// Synthesize the market instead of reading it.
    pub synth: Option<SynthParams>,
    /// Replaces the snapshot's state box.
    pub state_bounds: Option<[f64; 2]>,
    pub payoff: Option<PayoffSpec>,
    pub engine: BoundsConfig,
    /// Traded price checked by `arb`.
    pub price: Option<f64>,
    pub report: Option<PathBuf>,
    /// Tidy plot table, appended to.
    pub table: Option<PathBuf>,
    /// Directory receiving `lower.lp` and `upper.lp`.
    pub lp_dir: Option<PathBuf>,
    pub grid_out: Option<PathBuf>,
    pub measure_out: Option<PathBuf>,
}

impl RunConfig {
    /// Exactly one market source must be set.
    pub fn check_sources(&self) -> Result<(), String> {
        let set = [self.snapshot.is_some(), self.quotes.is_some(), self.synth.is_some()];
        match set.iter().filter(|&&b| b).count() {
            1 => Ok(()),
            0 => Err("no market data: give --snapshot, --quotes or --synth".into()),
            _ => Err("--snapshot, --quotes and --synth are mutually exclusive".into()),
        }
    }
}

/// Parses `start:step:end` (inclusive) or a comma-separated list.
pub fn parse_strikes(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, step, end] => strike_range(num(start)?, num(step)?, num(end)?),
        [_] => text.split(',').map(num).collect(),
        _ => Err("strikes are `start:step:end` or a comma-separated list".into()),
    }
}

pub fn strike_range(start: f64, step: f64, end: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0 && start.is_finite() && end.is_finite() && start <= end) {
        return Err("strike range needs start <= end and a positive step".into());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

/// Parses `a:b` into a pair.
pub fn parse_pair(text: &str) -> Result<(f64, f64), String> {
    let (a, b) = text.split_once(':').ok_or_else(|| format!("expected `a:b`, found `{text}`"))?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    Ok((num(a)?, num(b)?))
}

/// Payoff types and the parameters each one takes.
pub const CATALOG: &[(&str, &[&str])] = &[
    ("call", &["time_index", "strike"]),
    ("put", &["time_index", "strike"]),
    ("barrier_digital", &["lower", "upper"]),
    ("barrier_call", &["lower", "upper", "strike"]),
    ("barrier_put", &["lower", "upper", "strike"]),
    ("lookback_fixed_call", &["strike"]),
    ("lookback_fixed_put", &["strike"]),
    ("lookback_float_call", &[]),
    ("lookback_float_put", &[]),
    ("asian_fixed_call", &["strike"]),
    ("asian_fixed_put", &["strike"]),
    ("asian_float_call", &[]),
    ("asian_float_put", &[]),
    ("variance_swap", &["spot?"]),
    ("squared_log_return", &["step"]),
    ("increment", &["step"]),
    ("constant", &["value"]),
    ("custom_pwl", &["points", "cells"]),
];

pub fn catalog_listing() -> String {
    CATALOG
        .iter()
        .map(|(name, params)| {
            if params.is_empty() {
                format!("  {name}")
            } else {
                format!("  {name} ({})", params.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds a catalog payoff from its type name and named parameters.
pub fn payoff_from_params(kind: &str, params: Map<String, Value>) -> Result<PayoffSpec, String> {
    let Some((_, expected)) = CATALOG.iter().find(|(name, _)| *name == kind) else {
        return Err(format!("unknown payoff type `{kind}`; available payoffs:\n{}", catalog_listing()));
    };
    for key in params.keys() {
        if !expected.iter().any(|e| e.trim_end_matches('?') == key) {
            return Err(format!("payoff `{kind}` takes no parameter `{key}`"));
        }
    }
    let mut obj = Map::new();
    obj.insert("type".into(), Value::String(kind.into()));
    if !expected.is_empty() {
        obj.insert("params".into(), Value::Object(params));
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| format!("payoff `{kind}`: {e}"))
}
