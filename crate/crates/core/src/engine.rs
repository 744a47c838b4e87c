//! End-to-end bound computation: grid construction, both hedge programs,
//! certificates, oracle cross-checks and arbitrage verdicts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::{build_dual, extra_legs, martingale_tests, BoundSide, ExtraLeg};
use crate::grid::Grid;
use crate::lp::{LpSolution, LpStatus};
use crate::market::{check_quote_sanity, ExtraQuote, MarketSnapshot};
use crate::payoff::{ApproxMode, PayoffSpec, Validity};
use crate::primal::{build_primal, AtomColumnSource};
use crate::pwl::{overlay_functions, piece_vertices, tolerance, Affine, PiecewiseLinearFunction};
use crate::simplex::{solve, solve_column_generation, ColumnSource, SolverOptions};
use crate::{Error, Result};

pub use crate::quadrature::{bs_monte_carlo, bs_reference_price, ReferenceMethod, ReferencePrice};

/// Which linear program produces the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Strategy {
    /// Full Farkas hedge program when small, otherwise column generation.
    Auto,
    /// The explicit Farkas hedge program.
    Full,
    /// Measure program with atoms priced out region by region; the hedge is
    /// read off its row duals.
    Decomposed,
}

/// Black-Scholes parameters for the reference column.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceModel {
    pub spot: f64,
    pub vol: f64,
    pub step: f64,
}

/// Bounds on the expected squared log return of every step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VolBand {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct BoundsConfig {
    pub strategy: Strategy,
    /// Largest explicit hedge program (rows) `Auto` builds.
    pub full_max_rows: usize,
    /// Required for payoffs that are not piecewise linear.
    pub approx: Option<ApproxMode>,
    /// Also solve the other program and record the gap.
    pub oracle: bool,
    /// Add interpolated quotes at barrier levels.
    pub interpolate_barrier_quotes: bool,
    /// Positive state floor used for log-return payoffs when the state box
    /// starts at 0; defaults to `1e-3 * spot` (or `1e-3 *` lowest strike).
    pub log_floor: Option<f64>,
    pub vol_band: Option<VolBand>,
    pub reference: Option<ReferenceModel>,
    /// Extra grid points per date (0-based), merged into the grid.
    pub extra_points: Vec<Vec<f64>>,
    /// Number of times every grid interval is halved.
    pub bisections: usize,
    pub certificate_samples: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            full_max_rows: 800,
            approx: None,
            oracle: false,
            interpolate_barrier_quotes: false,
            log_floor: None,
            vol_band: None,
            reference: None,
            extra_points: Vec::new(),
            bisections: 0,
            certificate_samples: 10_000,
            seed: 7,
            max_iters: 200_000,
            tol: 1e-7,
        }
    }
}

impl BoundsConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_iters: self.max_iters, ..SolverOptions::default() }
    }
}

/// A semi-static portfolio: vanilla calls, extra instruments, forward
/// trades on adjacent boxes and cash. For an upper bound it dominates the
/// payoff; for a lower bound it is dominated by it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HedgeCertificate {
    pub side: BoundSide,
    /// Net quantity per vanilla quote, in snapshot order.
    pub vanilla_positions: Vec<f64>,
    /// Quantity held through the ask-side payoff of each extra quote.
    pub extra_ask_positions: Vec<f64>,
    /// Quantity held through the bid-side payoff of each extra quote.
    pub extra_bid_positions: Vec<f64>,
    /// Per level `k` (1-based, index `k - 1`) and adjacent box: units of
    /// `x_{k+1} - x_k` bought when `x|_k` is in the box.
    pub dynamic_positions: Vec<Vec<f64>>,
    pub cash: f64,
    /// Price of the portfolio at the quotes (ask for longs, bid for shorts
    /// on the upper side, the reverse on the lower side).
    pub cost: f64,
    /// Smallest `hedge - payoff` (upper) or `payoff - hedge` (lower) over the
    /// sampled points.
    pub sampled_margin: f64,
    /// Same quantity minimized exactly over all region vertices.
    pub vertex_margin: f64,
}

impl HedgeCertificate {
    fn price(&self, snapshot: &MarketSnapshot) -> f64 {
        let upper = self.side.is_upper();
        let mut cost = self.cash;
        for (q, &p) in snapshot.quotes().iter().zip(&self.vanilla_positions) {
            let long = if upper { q.ask } else { q.bid };
            let short = if upper { q.bid } else { q.ask };
            cost += if p > 0.0 { p * long } else { p * short };
        }
        for (e, (&a, &b)) in snapshot.extras().iter().zip(self.extra_ask_positions.iter().zip(&self.extra_bid_positions)) {
            if a != 0.0 {
                cost += a * e.ask;
            }
            if b != 0.0 {
                cost += b * e.bid;
            }
        }
        cost
    }

    /// Portfolio payoff at `x`, with `cell` the owning cell of `x`.
    pub fn payoff(&self, snapshot: &MarketSnapshot, grid: &Grid, legs: &Legs, cell: &[usize], x: &[f64]) -> f64 {
        let mut v = self.cash;
        for (q, &p) in snapshot.quotes().iter().zip(&self.vanilla_positions) {
            v += p * (x[q.time_index - 1] - q.strike).max(0.0);
        }
        for leg in &legs.ask {
            let p = self.extra_ask_positions[leg.extra];
            if p != 0.0 {
                v += p * leg.payoff.evaluate(x).unwrap_or(0.0);
            }
        }
        for leg in &legs.bid {
            let p = self.extra_bid_positions[leg.extra];
            if p != 0.0 {
                v += p * leg.payoff.evaluate(x).unwrap_or(0.0);
            }
        }
        for (k, row) in self.dynamic_positions.iter().enumerate() {
            let level = k + 1;
            v += row[grid.box_linear_index(cell, level)] * (x[level] - x[level - 1]);
        }
        v
    }

    fn affine_on(&self, snapshot: &MarketSnapshot, grid: &Grid, cell: &[usize], ask: &[Affine], bid: &[Affine], legs: &Legs) -> Affine {
        let n = grid.n_times();
        let c = grid.cell(cell);
        let mut a = Affine::constant(n, self.cash);
        for (q, &p) in snapshot.quotes().iter().zip(&self.vanilla_positions) {
            let t = q.time_index - 1;
            if 0.5 * (c.lo[t] + c.hi[t]) > q.strike {
                a.gradient[t] += p;
                a.offset -= p * q.strike;
            }
        }
        for (leg, aff) in legs.ask.iter().zip(ask) {
            a.add_scaled(self.extra_ask_positions[leg.extra], aff);
        }
        for (leg, aff) in legs.bid.iter().zip(bid) {
            a.add_scaled(self.extra_bid_positions[leg.extra], aff);
        }
        for (k, row) in self.dynamic_positions.iter().enumerate() {
            let level = k + 1;
            let p = row[grid.box_linear_index(cell, level)];
            a.gradient[level] += p;
            a.gradient[level - 1] -= p;
        }
        a
    }
}

/// Extra-quote payoffs per side.
#[derive(Debug, Clone)]
pub struct Legs {
    pub ask: Vec<ExtraLeg>,
    pub bid: Vec<ExtraLeg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum VerdictKind {
    BelowLower,
    Inside,
    AboveUpper,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Verdict {
    pub kind: VerdictKind,
    pub traded_price: f64,
    /// Distance to the violated bound (0 when inside).
    pub margin: f64,
    /// The hedge to trade against the mispriced payoff when outside.
    pub certificate: Option<HedgeCertificate>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SideStats {
    pub strategy: Strategy,
    pub iterations: usize,
    pub rows: usize,
    pub columns: usize,
    pub columns_materialized: usize,
    pub validity: Validity,
    /// Optimum of the other program when the oracle is enabled.
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSummary {
    pub points: Vec<Vec<f64>>,
    pub cells: usize,
    pub state_bounds: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundsReport {
    pub payoff: String,
    pub lower: f64,
    pub upper: f64,
    pub lower_certificate: HedgeCertificate,
    pub upper_certificate: HedgeCertificate,
    pub lower_stats: SideStats,
    pub upper_stats: SideStats,
    /// Largest `|bound - oracle|` over both sides.
    pub gap_vs_oracle: Option<f64>,
    pub bs_reference: Option<ReferencePrice>,
    pub verdict: Option<Verdict>,
    pub grid: GridSummary,
    pub warnings: Vec<String>,
}

/// Extra quotes bounding `E[ln(x_{k+1}/x_k)^2]` within
/// `[sigma_lo^2 step, sigma_hi^2 step]` for every step. The payoffs are
/// bracketed (over-estimate under the floor, under-estimate under the cap)
/// so the band is only ever relaxed.
pub fn volatility_band_constraints(n_times: usize, sigma_lo: f64, sigma_hi: f64, step: f64) -> Result<Vec<ExtraQuote>> {
    if !(sigma_lo >= 0.0 && sigma_hi.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput("volatility band needs sigma_lo >= 0 and step > 0".to_string()));
    }
    if sigma_hi < sigma_lo {
        return Err(Error::InvalidVolBand { lo: sigma_lo, hi: sigma_hi });
    }
    let mut out = Vec::new();
    for k in 1..n_times {
        let payoff = PayoffSpec::SquaredLogReturn { step: k };
        if sigma_lo > 0.0 {
            let mut q = ExtraQuote::new(payoff.clone(), sigma_lo * sigma_lo * step, f64::INFINITY);
            q.approximation = Some(ApproxMode::Bracket);
            out.push(q);
        }
        let mut q = ExtraQuote::new(payoff, f64::NEG_INFINITY, sigma_hi * sigma_hi * step);
        q.approximation = Some(ApproxMode::Bracket);
        out.push(q);
    }
    Ok(out)
}

/// Compares a traded price with the bounds.
pub fn detect_arbitrage(report: &BoundsReport, traded_price: f64) -> Verdict {
    let tol = 1e-9 * (1.0 + traded_price.abs());
    if traded_price > report.upper + tol {
        Verdict {
            kind: VerdictKind::AboveUpper,
            traded_price,
            margin: traded_price - report.upper,
            certificate: Some(report.upper_certificate.clone()),
        }
    } else if traded_price < report.lower - tol {
        Verdict {
            kind: VerdictKind::BelowLower,
            traded_price,
            margin: report.lower - traded_price,
            certificate: Some(report.lower_certificate.clone()),
        }
    } else {
        Verdict { kind: VerdictKind::Inside, traded_price, margin: 0.0, certificate: None }
    }
}

/// Market data and grid after the configuration has been applied.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub snapshot: MarketSnapshot,
    pub grid: Arc<Grid>,
    pub warnings: Vec<String>,
}

/// Applies the log floor, interpolated barrier quotes, volatility band and
/// extra points, and builds the grid.
pub fn prepare(snapshot: &MarketSnapshot, spec: &PayoffSpec, config: &BoundsConfig) -> Result<Prepared> {
    let n = snapshot.n_times();
    spec.validate(n)?;
    let mut warnings: Vec<String> = check_quote_sanity(snapshot).into_iter().map(|w| w.message).collect();
    let mut snap = snapshot.clone();
    if let Some(band) = config.vol_band {
        let extras = volatility_band_constraints(n, band.sigma_lo, band.sigma_hi, band.step)?;
        let mut all = snap.extras().to_vec();
        all.extend(extras);
        snap = snap.with_extras(all)?;
    }
    let needs_floor = spec.needs_positive_state() || snap.extras().iter().any(|e| e.payoff.needs_positive_state());
    if needs_floor && snap.state_lower_bound() <= 0.0 {
        let lowest = snap.quotes().iter().map(|q| q.strike).fold(f64::INFINITY, f64::min);
        let floor = config
            .log_floor
            .or(config.reference.map(|r| 1e-3 * r.spot))
            .unwrap_or(1e-3 * lowest);
        snap = snap.with_state_bounds(floor, snap.state_upper_bound())?;
        warnings.push(format!("state lower bound raised to {floor} for log returns"));
    }
    let mut levels = spec.grid_levels(n);
    for e in snap.extras() {
        for (l, extra) in levels.iter_mut().zip(e.payoff.grid_levels(n)) {
            l.extend(extra);
        }
    }
    if config.interpolate_barrier_quotes {
        if let PayoffSpec::BarrierDigital { lower, upper }
        | PayoffSpec::BarrierCall { lower, upper, .. }
        | PayoffSpec::BarrierPut { lower, upper, .. } = *spec
        {
            snap = snap.with_interpolated_quotes(&[lower, upper])?;
        }
    }
    for (l, extra) in levels.iter_mut().zip(&config.extra_points) {
        l.extend(extra.iter().copied());
    }
    let mut grid = Grid::build(&snap, &levels)?;
    for _ in 0..config.bisections {
        grid = grid.bisected();
    }
    if !spec.is_piecewise_linear() {
        warnings.push(format!(
            "{} is not piecewise linear and was approximated ({:?})",
            spec.name(),
            config.approx
        ));
    }
    Ok(Prepared { snapshot: snap, grid: Arc::new(grid), warnings })
}

struct SideResult {
    bound: f64,
    certificate: HedgeCertificate,
    stats: SideStats,
}

fn status_error(status: LpStatus) -> Error {
    match status {
        LpStatus::Infeasible => Error::Infeasible,
        LpStatus::Unbounded => Error::Unbounded,
        other => Error::NotOptimal(other),
    }
}

/// Bound on one side.
pub fn solve_side(
    prepared: &Prepared,
    payoff: &PiecewiseLinearFunction,
    side: BoundSide,
    config: &BoundsConfig,
    validity: Validity,
) -> Result<(f64, HedgeCertificate, SideStats)> {
    let r = solve_side_inner(prepared, payoff, side, config, validity)?;
    Ok((r.bound, r.certificate, r.stats))
}

fn solve_side_inner(
    prepared: &Prepared,
    payoff: &PiecewiseLinearFunction,
    side: BoundSide,
    config: &BoundsConfig,
    validity: Validity,
) -> Result<SideResult> {
    let grid = &prepared.grid;
    let snap = &prepared.snapshot;
    let n = grid.n_times();
    let opts = config.solver_options();
    let strategy = match config.strategy {
        Strategy::Auto if grid.cell_count() * (n + 1) <= config.full_max_rows && !payoff.has_cuts() => Strategy::Full,
        Strategy::Auto => Strategy::Decomposed,
        s => s,
    };
    let (asks, bids) = extra_legs(snap, grid)?;
    let legs = Legs { ask: asks, bid: bids };
    let n_extras = snap.extras().len();
    let tests = martingale_tests(grid);
    let mut dynamic: Vec<Vec<f64>> = (1..n).map(|k| vec![0.0; grid.box_count(k)]).collect();

    let (bound, mut cert, stats) = match strategy {
        Strategy::Full | Strategy::Auto => {
            let d = build_dual(snap, grid, payoff, side)?;
            let s = solve(&d.lp, &opts)?;
            match s.status {
                LpStatus::Optimal => {}
                // cash dominates any payoff on the box, so an unbounded hedge
                // program means the quotes themselves admit an arbitrage
                LpStatus::Unbounded => return Err(Error::Infeasible),
                other => return Err(status_error(other)),
            }
            let l = &d.layout;
            let sign = side.sign();
            let vanilla = (0..l.n_quotes).map(|q| sign * (s.x[l.yask + q] - s.x[l.ybid + q])).collect();
            let mut extra_ask = vec![0.0; n_extras];
            let mut extra_bid = vec![0.0; n_extras];
            for (k, &e) in l.ask_legs.iter().enumerate() {
                extra_ask[e] = sign * s.x[l.zask + k];
            }
            for (k, &e) in l.bid_legs.iter().enumerate() {
                extra_bid[e] = -sign * s.x[l.zbid + k];
            }
            for (t, test) in tests.iter().enumerate() {
                dynamic[test.level - 1][test.adjacent.linear] = sign * s.x[l.mart + t];
            }
            let cert = HedgeCertificate {
                side,
                vanilla_positions: vanilla,
                extra_ask_positions: extra_ask,
                extra_bid_positions: extra_bid,
                dynamic_positions: dynamic,
                cash: sign * s.x[l.w],
                cost: 0.0,
                sampled_margin: 0.0,
                vertex_margin: 0.0,
            };
            let oracle = if config.oracle {
                let p = build_primal(snap, grid, payoff, side)?;
                let ps = solve(&p.lp, &opts)?;
                if ps.status != LpStatus::Optimal {
                    return Err(status_error(ps.status));
                }
                Some(ps.objective)
            } else {
                None
            };
            let stats = SideStats {
                strategy: Strategy::Full,
                iterations: s.iterations,
                rows: d.lp.n_rows(),
                columns: d.lp.n_vars(),
                columns_materialized: d.lp.n_vars(),
                validity,
                oracle,
            };
            (d.bound(s.objective), cert, stats)
        }
        Strategy::Decomposed => {
            let mut src = AtomColumnSource::new(snap, grid, payoff, side)?;
            let s: LpSolution = solve_column_generation(&mut src, &opts)?;
            if s.status != LpStatus::Optimal {
                return Err(status_error(s.status));
            }
            let rows = src.rows();
            let y = &s.duals;
            let vanilla = rows
                .quotes
                .iter()
                .map(|&(a, b)| if a == b { y[a] } else { y[a] + y[b] })
                .collect();
            let mut extra_ask = vec![0.0; n_extras];
            let mut extra_bid = vec![0.0; n_extras];
            for (leg, &r) in legs.ask.iter().zip(&rows.ask_legs) {
                extra_ask[leg.extra] = y[r];
            }
            for (leg, &r) in legs.bid.iter().zip(&rows.bid_legs) {
                extra_bid[leg.extra] = y[r];
            }
            for (k, mrows) in rows.mart.iter().enumerate() {
                for (b, &r) in mrows.iter().enumerate() {
                    dynamic[k][b] = y[r];
                }
            }
            let cert = HedgeCertificate {
                side,
                vanilla_positions: vanilla,
                extra_ask_positions: extra_ask,
                extra_bid_positions: extra_bid,
                dynamic_positions: dynamic,
                cash: y[rows.normalization],
                cost: 0.0,
                sampled_margin: 0.0,
                vertex_margin: 0.0,
            };
            let stats = SideStats {
                strategy: Strategy::Decomposed,
                iterations: s.iterations,
                rows: src.master_rows(),
                columns: src.total_columns(),
                columns_materialized: s.columns_materialized,
                validity,
                oracle: None,
            };
            (s.objective, cert, stats)
        }
    };

    clean(&mut cert);
    cert.cost = cert.price(snap);
    cert.vertex_margin = vertex_margin(&cert, snap, grid, payoff, &legs)?;
    cert.sampled_margin = sampled_margin(&cert, snap, grid, payoff, &legs, config.certificate_samples, config.seed);
    let mut stats = stats;
    if stats.strategy == Strategy::Decomposed && config.oracle {
        // the certificate is a feasible hedge; its cost closes the gap
        stats.oracle = Some(cert.cost);
    }
    Ok(SideResult { bound, certificate: cert, stats })
}

fn clean(cert: &mut HedgeCertificate) {
    let zap = |v: &mut f64| {
        if v.abs() < 1e-12 {
            *v = 0.0;
        }
    };
    cert.vanilla_positions.iter_mut().for_each(zap);
    cert.extra_ask_positions.iter_mut().for_each(zap);
    cert.extra_bid_positions.iter_mut().for_each(zap);
    cert.dynamic_positions.iter_mut().flatten().for_each(zap);
    zap(&mut cert.cash);
}

/// Exact worst-case margin over all region vertices.
fn vertex_margin(
    cert: &HedgeCertificate,
    snap: &MarketSnapshot,
    grid: &Arc<Grid>,
    payoff: &PiecewiseLinearFunction,
    legs: &Legs,
) -> Result<f64> {
    let sign = cert.side.sign();
    let tol = tolerance(grid);
    let mut functions: Vec<&PiecewiseLinearFunction> = vec![payoff];
    functions.extend(legs.ask.iter().map(|l| &l.payoff));
    functions.extend(legs.bid.iter().map(|l| &l.payoff));
    let mut worst = f64::INFINITY;
    for linear in 0..grid.cell_count() {
        let index = grid.cell_multi_index(linear);
        let cell = grid.cell(&index);
        for r in overlay_functions(grid, linear, &functions) {
            let na = legs.ask.len();
            let hedge = cert.affine_on(snap, grid, &index, &r.affines[1..1 + na], &r.affines[1 + na..], legs);
            let excess = hedge.minus(&r.affines[0]).scaled(sign);
            for v in piece_vertices(&cell, &r.cuts, tol) {
                worst = worst.min(excess.eval(&v));
            }
        }
    }
    Ok(worst)
}

fn sampled_margin(
    cert: &HedgeCertificate,
    snap: &MarketSnapshot,
    grid: &Grid,
    payoff: &PiecewiseLinearFunction,
    legs: &Legs,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_times();
    let sign = cert.side.sign();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|i| rng.random_range(grid.lower(i)..=grid.upper(i))).collect();
        let Some(cell) = grid.locate(&x) else { continue };
        let h = payoff.evaluate(&x).unwrap_or(0.0);
        let v = cert.payoff(snap, grid, legs, &cell, &x);
        worst = worst.min(sign * (v - h));
    }
    worst
}

/// Lower and upper bounds for `spec` with certificates and diagnostics.
pub fn price_bounds(snapshot: &MarketSnapshot, spec: &PayoffSpec, config: &BoundsConfig) -> Result<BoundsReport> {
    let prepared = prepare(snapshot, spec, config)?;
    let grid = &prepared.grid;
    let mut sides = Vec::with_capacity(2);
    for side in [BoundSide::Lower, BoundSide::Upper] {
        let fit = if spec.is_piecewise_linear() {
            None
        } else {
            let mode = config.approx.ok_or_else(|| Error::ApproximationRequired(spec.name().to_string()))?;
            Some(mode.fit(side.is_upper()))
        };
        let payoff = spec.to_pwl(grid, fit)?;
        let validity = Validity::of(fit, side.is_upper());
        sides.push(solve_side_inner(&prepared, &payoff, side, config, validity)?);
    }
    let upper = sides.pop().unwrap();
    let lower = sides.pop().unwrap();
    let gap = match (lower.stats.oracle, upper.stats.oracle) {
        (Some(lo), Some(up)) => Some((lo - lower.bound).abs().max((up - upper.bound).abs())),
        _ => None,
    };
    let bs_reference = match config.reference {
        Some(r) => Some(bs_reference_price(spec, r.spot, r.vol, r.step, snapshot.n_times())?),
        None => None,
    };
    let mut warnings = prepared.warnings.clone();
    if lower.bound > upper.bound + 1e-8 {
        warnings.push(format!("lower bound {} exceeds upper bound {}", lower.bound, upper.bound));
    }
    Ok(BoundsReport {
        payoff: spec.name().to_string(),
        lower: lower.bound,
        upper: upper.bound,
        lower_certificate: lower.certificate,
        upper_certificate: upper.certificate,
        lower_stats: lower.stats,
        upper_stats: upper.stats,
        gap_vs_oracle: gap,
        bs_reference,
        verdict: None,
        grid: GridSummary {
            points: grid.all_points().to_vec(),
            cells: grid.cell_count(),
            state_bounds: (prepared.snapshot.state_lower_bound(), prepared.snapshot.state_upper_bound()),
        },
        warnings,
    })
}
