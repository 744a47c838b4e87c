//! Vanilla quotes, market snapshots and synthetic Black-Scholes data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::payoff::{ApproxMode, PayoffSpec};
use crate::{Error, Result};

/// Bid/ask quote on a call struck at `strike`, maturing at monitoring date
/// `time_index` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VanillaQuote {
    pub time_index: usize,
    pub strike: f64,
    pub bid: f64,
    pub ask: f64,
}

impl VanillaQuote {
    pub fn new(time_index: usize, strike: f64, bid: f64, ask: f64) -> Self {
        Self {
            time_index,
            strike,
            bid,
            ask,
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }
}

/// Quote on some other traded payoff. A non-finite side means the market
/// only bounds the price from the other side.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraQuote {
    pub payoff: PayoffSpec,
    pub bid: f64,
    pub ask: f64,
    /// Needed when `payoff` is not piecewise linear.
    pub approximation: Option<ApproxMode>,
}

impl ExtraQuote {
    pub fn new(payoff: PayoffSpec, bid: f64, ask: f64) -> Self {
        Self {
            payoff,
            bid,
            ask,
            approximation: None,
        }
    }

    pub fn has_bid(&self) -> bool {
        self.bid.is_finite()
    }

    pub fn has_ask(&self) -> bool {
        self.ask.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSnapshot {
    n_times: usize,
    quotes: Vec<VanillaQuote>,
    extras: Vec<ExtraQuote>,
    state_lower_bound: f64,
    state_upper_bound: f64,
}

impl MarketSnapshot {
    /// Validates every quote and the per-maturity coverage.
    pub fn new(
        n_times: usize,
        quotes: Vec<VanillaQuote>,
        extras: Vec<ExtraQuote>,
        state_lower_bound: f64,
        state_upper_bound: f64,
    ) -> Result<Self> {
        if n_times == 0 {
            return Err(Error::InvalidInput("n_times must be at least 1".into()));
        }
        if !(state_lower_bound.is_finite() && state_upper_bound.is_finite())
            || state_lower_bound < 0.0
            || state_lower_bound >= state_upper_bound
        {
            return Err(Error::InvalidInput(format!(
                "state bounds [{state_lower_bound}, {state_upper_bound}] must be finite, \
                 nonnegative and increasing"
            )));
        }
        for (index, q) in quotes.iter().enumerate() {
            let fail = |reason| Error::InvalidQuote {
                index,
                time_index: q.time_index,
                strike: q.strike,
                reason,
            };
            if !(q.strike.is_finite() && q.bid.is_finite() && q.ask.is_finite()) {
                return Err(fail("non-finite field"));
            }
            if q.time_index == 0 || q.time_index > n_times {
                return Err(fail("time index out of range"));
            }
            if q.strike <= 0.0 {
                return Err(fail("strike must be positive"));
            }
            if q.bid < 0.0 {
                return Err(fail("negative bid"));
            }
            if q.bid > q.ask {
                return Err(fail("bid exceeds ask"));
            }
            if q.strike <= state_lower_bound || q.strike >= state_upper_bound {
                return Err(fail("strike outside state box"));
            }
        }
        for (index, e) in extras.iter().enumerate() {
            if e.bid.is_nan() || e.ask.is_nan() {
                return Err(Error::InvalidExtraQuote {
                    index,
                    reason: "NaN price",
                });
            }
            if !e.has_bid() && !e.has_ask() {
                return Err(Error::InvalidExtraQuote {
                    index,
                    reason: "neither bid nor ask is finite",
                });
            }
            if e.bid > e.ask {
                return Err(Error::InvalidExtraQuote {
                    index,
                    reason: "bid exceeds ask",
                });
            }
        }
        for t in 1..=n_times {
            if !quotes.iter().any(|q| q.time_index == t) {
                return Err(Error::MissingQuotes(t));
            }
        }
        Ok(Self {
            n_times,
            quotes,
            extras,
            state_lower_bound,
            state_upper_bound,
        })
    }

    /// Lower bound 0 and upper bound twice the largest strike.
    pub fn with_default_bounds(n_times: usize, quotes: Vec<VanillaQuote>) -> Result<Self> {
        let max_strike = quotes.iter().map(|q| q.strike).fold(0.0, f64::max);
        if max_strike <= 0.0 {
            return Err(Error::MissingQuotes(1));
        }
        Self::new(n_times, quotes, Vec::new(), 0.0, 2.0 * max_strike)
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn quotes(&self) -> &[VanillaQuote] {
        &self.quotes
    }

    pub fn extras(&self) -> &[ExtraQuote] {
        &self.extras
    }

    pub fn state_lower_bound(&self) -> f64 {
        self.state_lower_bound
    }

    pub fn state_upper_bound(&self) -> f64 {
        self.state_upper_bound
    }

    pub fn quotes_at(&self, time_index: usize) -> impl Iterator<Item = &VanillaQuote> + '_ {
        self.quotes
            .iter()
            .filter(move |q| q.time_index == time_index)
    }

    pub fn with_extra(&self, extra: ExtraQuote) -> Result<Self> {
        let mut extras = self.extras.clone();
        extras.push(extra);
        Self::new(
            self.n_times,
            self.quotes.clone(),
            extras,
            self.state_lower_bound,
            self.state_upper_bound,
        )
    }

    pub fn with_extras(&self, extras: Vec<ExtraQuote>) -> Result<Self> {
        Self::new(
            self.n_times,
            self.quotes.clone(),
            extras,
            self.state_lower_bound,
            self.state_upper_bound,
        )
    }

    pub fn with_state_bounds(&self, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            self.n_times,
            self.quotes.clone(),
            self.extras.clone(),
            lower,
            upper,
        )
    }

    /// Every price scaled by `factor`: strikes, quotes and state bounds.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        let quotes = self
            .quotes
            .iter()
            .map(|q| VanillaQuote::new(q.time_index, q.strike * factor, q.bid * factor, q.ask * factor))
            .collect();
        Self::new(
            self.n_times,
            quotes,
            Vec::new(),
            self.state_lower_bound * factor,
            self.state_upper_bound * factor,
        )
    }

    /// Adds a synthetic quote at each `level` that is not already quoted, by
    /// linear interpolation of neighbouring mids. The spread is the larger of
    /// the two neighbours' spreads. Levels outside the quoted strike range at a
    /// maturity are skipped.
    pub fn with_interpolated_quotes(&self, levels: &[f64]) -> Result<Self> {
        let mut quotes = self.quotes.clone();
        for t in 1..=self.n_times {
            let mut at_t: Vec<VanillaQuote> = self.quotes_at(t).copied().collect();
            at_t.sort_by(|a, b| a.strike.total_cmp(&b.strike));
            for &level in levels {
                if at_t.iter().any(|q| q.strike == level) {
                    continue;
                }
                let upper = match at_t.iter().position(|q| q.strike > level) {
                    Some(0) | None => continue,
                    Some(p) => p,
                };
                let (a, b) = (at_t[upper - 1], at_t[upper]);
                let weight = (level - a.strike) / (b.strike - a.strike);
                let mid = a.mid() + weight * (b.mid() - a.mid());
                let half_spread = 0.5 * (a.ask - a.bid).max(b.ask - b.bid);
                quotes.push(VanillaQuote::new(
                    t,
                    level,
                    (mid - half_spread).max(0.0),
                    mid + half_spread,
                ));
            }
        }
        quotes.sort_by(|a, b| {
            a.time_index
                .cmp(&b.time_index)
                .then(a.strike.total_cmp(&b.strike))
        });
        Self::new(
            self.n_times,
            quotes,
            self.extras.clone(),
            self.state_lower_bound,
            self.state_upper_bound,
        )
    }
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Black-Scholes call value with zero rate and zero dividends.
pub fn bs_call_price(spot: f64, vol: f64, maturity: f64, strike: f64) -> Result<f64> {
    if ![spot, vol, maturity, strike].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite Black-Scholes input".into()));
    }
    if spot <= 0.0 || vol <= 0.0 || maturity <= 0.0 || strike < 0.0 {
        return Err(Error::InvalidInput(format!(
            "Black-Scholes needs spot, vol, maturity > 0 and strike >= 0 \
             (got {spot}, {vol}, {maturity}, {strike})"
        )));
    }
    if strike == 0.0 {
        return Ok(spot);
    }
    let total_vol = vol * libm::sqrt(maturity);
    let d1 = (libm::log(spot / strike) + 0.5 * total_vol * total_vol) / total_vol;
    let d2 = d1 - total_vol;
    let price = spot * normal_cdf(d1) - strike * normal_cdf(d2);
    Ok(price.clamp((spot - strike).max(0.0), spot))
}

/// One zero-spread quote per strike and maturity `i * step`, `i = 1..=n_times`.
pub fn synthesize_snapshot(
    spot: f64,
    vol: f64,
    step: f64,
    n_times: usize,
    strikes: &[f64],
    upper_bound: f64,
) -> Result<MarketSnapshot> {
    if strikes.is_empty() {
        return Err(Error::NoStrikes);
    }
    if strikes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("strikes must be strictly increasing".into()));
    }
    if strikes[0] <= 0.0 || strikes[strikes.len() - 1] >= upper_bound {
        return Err(Error::InvalidInput(format!(
            "strikes must lie inside (0, {upper_bound})"
        )));
    }
    let mut quotes = Vec::with_capacity(strikes.len() * n_times);
    for t in 1..=n_times {
        for &k in strikes {
            let c = bs_call_price(spot, vol, t as f64 * step, k)?;
            quotes.push(VanillaQuote::new(t, k, c, c));
        }
    }
    MarketSnapshot::new(n_times, quotes, Vec::new(), 0.0, upper_bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SanityKind {
    /// Mid increases with strike.
    Monotonicity,
    /// Mid lies above the chord of its neighbours.
    Convexity,
    /// Mid exceeds the state upper bound.
    AboveStateBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuoteWarning {
    pub kind: SanityKind,
    pub time_index: usize,
    pub strike: f64,
    pub message: String,
}

/// Advisory static-arbitrage checks on mid prices. Never fails; the LP gives
/// the authoritative infeasibility verdict.
pub fn check_quote_sanity(snapshot: &MarketSnapshot) -> Vec<QuoteWarning> {
    const TOL: f64 = 1e-10;
    let mut warnings = Vec::new();
    for t in 1..=snapshot.n_times() {
        let mut qs: Vec<&VanillaQuote> = snapshot.quotes_at(t).collect();
        qs.sort_by(|a, b| a.strike.total_cmp(&b.strike));
        for q in &qs {
            if q.mid() > snapshot.state_upper_bound() + TOL {
                warnings.push(QuoteWarning {
                    kind: SanityKind::AboveStateBound,
                    time_index: t,
                    strike: q.strike,
                    message: format!(
                        "mid {} exceeds state upper bound {}",
                        q.mid(),
                        snapshot.state_upper_bound()
                    ),
                });
            }
        }
        for w in qs.windows(2) {
            if w[1].mid() > w[0].mid() + TOL {
                warnings.push(QuoteWarning {
                    kind: SanityKind::Monotonicity,
                    time_index: t,
                    strike: w[1].strike,
                    message: format!(
                        "mid rises from {} at K={} to {} at K={}",
                        w[0].mid(),
                        w[0].strike,
                        w[1].mid(),
                        w[1].strike
                    ),
                });
            }
        }
        for w in qs.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            let weight = (b.strike - a.strike) / (c.strike - a.strike);
            let chord = a.mid() + weight * (c.mid() - a.mid());
            if b.mid() > chord + TOL {
                warnings.push(QuoteWarning {
                    kind: SanityKind::Convexity,
                    time_index: t,
                    strike: b.strike,
                    message: format!("mid {} above chord {} of its neighbours", b.mid(), chord),
                });
            }
        }
    }
    warnings
}
