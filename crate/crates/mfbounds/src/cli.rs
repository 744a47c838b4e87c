//! The `mfbounds` command line: `synth`, `bounds` and `arb`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mfbounds_core::dual::BoundSide;
use mfbounds_core::engine::{prepare, ReferenceModel, Strategy, VerdictKind, VolBand};
use mfbounds_core::primal::AtomColumnSource;
use mfbounds_core::{
    build_dual, detect_arbitrage, price_bounds, solve_column_generation, synthesize_snapshot, ApproxMode,
    HedgeCertificate, MarketSnapshot, PayoffSpec,
};
use serde_json::{Map, Value};

use crate::config::{parse_pair, parse_strikes, payoff_from_params, RunConfig};
use crate::io::{self, LoadError, SnapshotFormat};
use crate::lp_format::write_lp;
use crate::report::{append_table_row, summary_row, table_row, ConfigEcho, InputHash, ReportFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ARBITRAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mfbounds", version, about = "Model-free price bounds for path-dependent options")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a snapshot of Black-Scholes call quotes.
    Synth(SynthArgs),
    /// Compute lower and upper bounds for a payoff.
    Bounds(BoundsArgs),
    /// Check a traded price against the bounds.
    Arb(ArbArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50.0)]
    pub spot: f64,
    #[arg(long, default_value_t = 0.3)]
    pub vol: f64,
    /// Years between monitoring dates.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Number of monitoring dates.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub times: u64,
    /// `start:step:end` or a comma-separated list.
    #[arg(long, default_value = "30:2:60")]
    pub strikes: String,
    /// Upper end of the state box.
    #[arg(long, default_value_t = 100.0)]
    pub upper: f64,
    /// Output file (`.json` or `.csv`); standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MarketArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Snapshot JSON.
    #[arg(long, group = "source")]
    pub snapshot: Option<PathBuf>,
    /// Quote CSV (`time_index,strike,bid,ask`).
    #[arg(long, group = "source")]
    pub quotes: Option<PathBuf>,
    /// Synthesize a Black-Scholes market (see --spot, --vol, --step, --times, --strikes, --upper).
    #[arg(long, group = "source")]
    pub synth: bool,
    #[arg(long, requires = "synth")]
    pub spot: Option<f64>,
    #[arg(long, requires = "synth")]
    pub vol: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, requires = "synth", value_parser = clap::value_parser!(u64).range(1..))]
    pub times: Option<u64>,
    #[arg(long, requires = "synth")]
    pub strikes: Option<String>,
    #[arg(long, requires = "synth")]
    pub upper: Option<f64>,
    /// State box `lo:hi`.
    #[arg(long)]
    pub state_bounds: Option<String>,
    /// Black-Scholes reference `spot:vol:step` (taken from the synthetic market by default).
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Debug, Args)]
pub struct PayoffArgs {
    /// Payoff type from the catalog.
    #[arg(long, conflicts_with = "payoff_file")]
    pub payoff: Option<String>,
    /// JSON payoff `{"type": ..., "params": {...}}`.
    #[arg(long)]
    pub payoff_file: Option<PathBuf>,
    #[arg(long)]
    pub strike: Option<f64>,
    /// Barrier levels `lower:upper`.
    #[arg(long)]
    pub barrier: Option<String>,
    #[arg(long)]
    pub time_index: Option<u64>,
    /// Step of an increment or squared log return.
    #[arg(long)]
    pub at_step: Option<u64>,
    #[arg(long)]
    pub value: Option<f64>,
    /// Initial spot of a variance swap.
    #[arg(long)]
    pub initial_spot: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Auto,
    Full,
    Decomposed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ApproxArg {
    Interpolate,
    Under,
    Over,
    Bracket,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Solve the other program too and report the gap.
    #[arg(long)]
    pub oracle: bool,
    /// Add interpolated quotes at the barrier levels.
    #[arg(long)]
    pub interpolate_barriers: bool,
    /// Halve every grid interval this many times.
    #[arg(long)]
    pub bisections: Option<usize>,
    /// Approximation of payoffs that are not piecewise linear.
    #[arg(long, value_enum)]
    pub approx: Option<ApproxArg>,
    /// Volatility band `lo:hi` on every step.
    #[arg(long)]
    pub vol_band: Option<String>,
    /// Random points used to check certificates.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Tidy CSV `payoff,steps,lower,upper,reference`, appended to.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Directory receiving the hedge programs as `lower.lp` and `upper.lp`.
    #[arg(long)]
    pub lp_dir: Option<PathBuf>,
    /// Grid JSON.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    /// Optimal measures JSON.
    #[arg(long)]
    pub measure_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub payoff: PayoffArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ArbArgs {
    #[command(flatten)]
    pub bounds: BoundsArgs,
    /// Traded price of the payoff.
    #[arg(long)]
    pub price: f64,
}

/// Marks errors caused by inconsistent market data.
fn is_infeasible(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<mfbounds_core::Error>() == Some(&mfbounds_core::Error::Infeasible)
            || c.downcast_ref::<LoadError>().and_then(LoadError::market_error) == Some(&mfbounds_core::Error::Infeasible)
    })
}

/// Runs one command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_ERROR
                }
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Bounds(a) => cmd_bounds(&a, None, out),
        Command::Arb(a) => cmd_bounds(&a.bounds, Some(a.price), out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            if is_infeasible(&e) {
                EXIT_INFEASIBLE
            } else {
                EXIT_ERROR
            }
        }
    }
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let strikes = parse_strikes(&a.strikes).map_err(|e| anyhow!(e))?;
    let snap = synthesize_snapshot(a.spot, a.vol, a.step, a.times as usize, &strikes, a.upper)?;
    match &a.out {
        Some(path) => {
            let format = SnapshotFormat::from_path(path).unwrap_or(SnapshotFormat::Json);
            io::save_snapshot(path, &snap, format)?;
        }
        None => out.write_all(io::snapshot_to_json(&snap).as_bytes())?,
    }
    Ok(EXIT_OK)
}

fn read_input(path: &Path, inputs: &mut Vec<InputHash>) -> anyhow::Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    inputs.push(InputHash::of(path, &bytes));
    Ok(bytes)
}

/// Effective configuration: the config file, then flags on top.
fn resolve_config(a: &BoundsArgs, price: Option<f64>, inputs: &mut Vec<InputHash>) -> anyhow::Result<RunConfig> {
    let m = &a.market;
    let mut cfg: RunConfig = match &m.config {
        Some(path) => {
            let bytes = read_input(path, inputs)?;
            serde_json::from_slice(&bytes).with_context(|| format!("config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if m.snapshot.is_some() || m.quotes.is_some() || m.synth {
        cfg.snapshot = m.snapshot.clone();
        cfg.quotes = m.quotes.clone();
        cfg.synth = m.synth.then(|| cfg.synth.clone().unwrap_or_default());
    }
    if let Some(s) = cfg.synth.as_mut() {
        if let Some(v) = m.spot {
            s.spot = v;
        }
        if let Some(v) = m.vol {
            s.vol = v;
        }
        if let Some(v) = m.step {
            s.step = v;
        }
        if let Some(v) = m.times {
            s.times = v as usize;
        }
        if let Some(v) = &m.strikes {
            s.strikes = parse_strikes(v).map_err(|e| anyhow!(e))?;
        }
        if let Some(v) = m.upper {
            s.upper = v;
        }
    }
    cfg.check_sources().map_err(|e| anyhow!(e))?;
    if let Some(b) = &m.state_bounds {
        let (lo, hi) = parse_pair(b).map_err(|e| anyhow!("--state-bounds: {e}"))?;
        cfg.state_bounds = Some([lo, hi]);
    }
    if let Some(r) = &m.reference {
        let parts: Vec<f64> = r
            .split(':')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| anyhow!("--reference expects `spot:vol:step`"))?;
        let [spot, vol, step] = parts[..] else { bail!("--reference expects `spot:vol:step`") };
        cfg.engine.reference = Some(ReferenceModel { spot, vol, step });
    } else if cfg.engine.reference.is_none() {
        if let Some(s) = &cfg.synth {
            cfg.engine.reference = Some(ReferenceModel { spot: s.spot, vol: s.vol, step: s.step });
        }
    }

    let p = &a.payoff;
    if let Some(path) = &p.payoff_file {
        let bytes = read_input(path, inputs)?;
        cfg.payoff = Some(serde_json::from_slice(&bytes).with_context(|| format!("payoff {}", path.display()))?);
    } else if let Some(kind) = &p.payoff {
        let mut params = Map::new();
        let mut put = |k: &str, v: Value| {
            params.insert(k.to_string(), v);
        };
        if let Some(v) = p.strike {
            put("strike", v.into());
        }
        if let Some(b) = &p.barrier {
            let (lo, hi) = parse_pair(b).map_err(|e| anyhow!("--barrier: {e}"))?;
            put("lower", lo.into());
            put("upper", hi.into());
        }
        if let Some(v) = p.time_index {
            put("time_index", v.into());
        }
        if let Some(v) = p.at_step {
            put("step", v.into());
        }
        if let Some(v) = p.value {
            put("value", v.into());
        }
        if let Some(v) = p.initial_spot {
            put("spot", v.into());
        }
        cfg.payoff = Some(payoff_from_params(kind, params).map_err(|e| anyhow!(e))?);
    }
    if cfg.payoff.is_none() {
        bail!("no payoff: give --payoff or --payoff-file");
    }

    let e = &a.engine;
    if let Some(s) = e.strategy {
        cfg.engine.strategy = match s {
            StrategyArg::Auto => Strategy::Auto,
            StrategyArg::Full => Strategy::Full,
            StrategyArg::Decomposed => Strategy::Decomposed,
        };
    }
    cfg.engine.oracle |= e.oracle;
    cfg.engine.interpolate_barrier_quotes |= e.interpolate_barriers;
    if let Some(v) = e.bisections {
        cfg.engine.bisections = v;
    }
    if let Some(v) = e.approx {
        cfg.engine.approx = Some(match v {
            ApproxArg::Interpolate => ApproxMode::Interpolate,
            ApproxArg::Under => ApproxMode::Under,
            ApproxArg::Over => ApproxMode::Over,
            ApproxArg::Bracket => ApproxMode::Bracket,
        });
    }
    if let Some(b) = &e.vol_band {
        let (lo, hi) = parse_pair(b).map_err(|e| anyhow!("--vol-band: {e}"))?;
        let step = m
            .step
            .or(cfg.synth.as_ref().map(|s| s.step))
            .or(cfg.engine.reference.map(|r| r.step))
            .ok_or_else(|| anyhow!("--vol-band needs the time step (--step or --reference)"))?;
        cfg.engine.vol_band = Some(VolBand { sigma_lo: lo, sigma_hi: hi, step });
    }
    if let Some(v) = e.samples {
        cfg.engine.certificate_samples = v;
    }
    if let Some(v) = e.seed {
        cfg.engine.seed = v;
    }

    let o = &a.output;
    cfg.report = o.report.clone().or(cfg.report);
    cfg.table = o.table.clone().or(cfg.table);
    cfg.lp_dir = o.lp_dir.clone().or(cfg.lp_dir);
    cfg.grid_out = o.grid_out.clone().or(cfg.grid_out);
    cfg.measure_out = o.measure_out.clone().or(cfg.measure_out);
    if price.is_some() {
        cfg.price = price;
    }
    Ok(cfg)
}

/// Market data named by the configuration.
pub fn load_market(cfg: &RunConfig, inputs: &mut Vec<InputHash>) -> anyhow::Result<MarketSnapshot> {
    let snap = if let Some(path) = &cfg.snapshot {
        let bytes = read_input(path, inputs)?;
        io::snapshot_from_json(&bytes).with_context(|| format!("snapshot {}", path.display()))?
    } else if let Some(path) = &cfg.quotes {
        let bytes = read_input(path, inputs)?;
        let bounds = cfg.state_bounds.map(|[lo, hi]| (lo, hi));
        io::read_quotes_csv(bytes.as_slice(), bounds).with_context(|| format!("quotes {}", path.display()))?
    } else if let Some(s) = &cfg.synth {
        synthesize_snapshot(s.spot, s.vol, s.step, s.times, &s.strikes, s.upper)?
    } else {
        bail!("no market data");
    };
    match cfg.state_bounds {
        Some([lo, hi]) => Ok(snap.with_state_bounds(lo, hi)?),
        None => Ok(snap),
    }
}

fn write_side_outputs(cfg: &RunConfig, snap: &MarketSnapshot, spec: &PayoffSpec) -> anyhow::Result<()> {
    if cfg.lp_dir.is_none() && cfg.grid_out.is_none() && cfg.measure_out.is_none() {
        return Ok(());
    }
    let prepared = prepare(snap, spec, &cfg.engine)?;
    let grid = &prepared.grid;
    if let Some(path) = &cfg.grid_out {
        fs::write(path, io::grid_to_json(grid)).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut measures = Map::new();
    for side in [BoundSide::Lower, BoundSide::Upper] {
        let fit = if spec.is_piecewise_linear() {
            None
        } else {
            cfg.engine.approx.map(|m| m.fit(side.is_upper()))
        };
        let payoff = spec.to_pwl(grid, fit)?;
        let name = if side.is_upper() { "upper" } else { "lower" };
        if let Some(dir) = &cfg.lp_dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let d = build_dual(&prepared.snapshot, grid, &payoff, side)?;
            let text = write_lp(&d.lp).map_err(|e| anyhow!(e))?;
            let path = dir.join(format!("{name}.lp"));
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        if cfg.measure_out.is_some() {
            let mut src = AtomColumnSource::new(&prepared.snapshot, grid, &payoff, side)?;
            let s = solve_column_generation(&mut src, &cfg.engine.solver_options())?;
            let measure = src.measure(&s)?;
            measures.insert(name.into(), serde_json::to_value(&measure)?);
        }
    }
    if let Some(path) = &cfg.measure_out {
        let text = serde_json::to_string_pretty(&Value::Object(measures))?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_bounds(a: &BoundsArgs, price: Option<f64>, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut inputs = Vec::new();
    let cfg = resolve_config(a, price, &mut inputs)?;
    let snap = load_market(&cfg, &mut inputs)?;
    let spec = cfg.payoff.clone().expect("checked in resolve_config");
    let mut report = price_bounds(&snap, &spec, &cfg.engine)?;
    if let Some(p) = cfg.price {
        report.verdict = Some(detect_arbitrage(&report, p));
    }
    write_side_outputs(&cfg, &snap, &spec)?;

    if let Some(path) = &cfg.table {
        append_table_row(path, &table_row(&report, snap.n_times())).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &cfg.report {
        let echo = ConfigEcho { config: cfg.clone(), inputs, version: env!("CARGO_PKG_VERSION").to_string() };
        let file = ReportFile::new(report.clone(), echo);
        fs::write(path, file.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }

    match &report.verdict {
        None => {
            let (header, row) = summary_row(&report, cfg.engine.oracle);
            writeln!(out, "{header}\n{row}")?;
            Ok(EXIT_OK)
        }
        Some(v) => {
            let kind = match v.kind {
                VerdictKind::Inside => "inside",
                VerdictKind::AboveUpper => "above_upper",
                VerdictKind::BelowLower => "below_lower",
            };
            writeln!(out, "verdict,traded_price,lower,upper,margin")?;
            writeln!(out, "{kind},{},{},{},{}", v.traded_price, report.lower, report.upper, v.margin)?;
            match &v.certificate {
                None => Ok(EXIT_OK),
                Some(c) => {
                    print_certificate(out, &snap, c, v.kind)?;
                    Ok(EXIT_ARBITRAGE)
                }
            }
        }
    }
}

fn print_certificate(
    out: &mut dyn Write,
    snap: &MarketSnapshot,
    c: &HedgeCertificate,
    kind: VerdictKind,
) -> std::io::Result<()> {
    let action = if kind == VerdictKind::AboveUpper {
        "sell the payoff and buy this hedge, which dominates it"
    } else {
        "buy the payoff and sell this hedge, which it dominates"
    };
    writeln!(out, "{action} (hedge cost {}):", c.cost)?;
    for (q, &pos) in snap.quotes().iter().zip(&c.vanilla_positions) {
        if pos != 0.0 {
            writeln!(out, "  call t={} K={}: {pos}", q.time_index, q.strike)?;
        }
    }
    for (e, (&a, &b)) in c.extra_ask_positions.iter().zip(&c.extra_bid_positions).enumerate() {
        if a != 0.0 || b != 0.0 {
            writeln!(out, "  extra {}: {}", e + 1, a + b)?;
        }
    }
    let forwards = c.dynamic_positions.iter().flatten().filter(|&&v| v != 0.0).count();
    if forwards > 0 {
        writeln!(out, "  forward trades: {forwards} box positions (see the report)")?;
    }
    writeln!(out, "  cash: {}", c.cash)?;
    writeln!(out, "  worst-case margin at vertices: {}", c.vertex_margin)?;
    Ok(())
}

/// Entry point of the binary.
pub fn main_with_args() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
