#![allow(dead_code)]

use mfbounds_core::{bs_call_price, synthesize_snapshot, MarketSnapshot, PayoffSpec, VanillaQuote};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SPOT: f64 = 50.0;

/// Synthetic ladder used throughout: strikes 30, 32, ..., 60, box [0, 100].
pub fn ladder_snapshot(n: usize) -> MarketSnapshot {
    let strikes: Vec<f64> = (15..=30).map(|k| 2.0 * k as f64).collect();
    synthesize_snapshot(SPOT, 0.3, 0.5, n, &strikes, 100.0).unwrap()
}

/// `count` distinct strikes in `[lo, hi]` on a 0.5 tick, sorted.
pub fn random_strikes(rng: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut ks: Vec<f64> = Vec::new();
    while ks.len() < count {
        let k = (rng.random_range(lo..hi) * 2.0).round() / 2.0;
        if !ks.contains(&k) {
            ks.push(k);
        }
    }
    ks.sort_by(f64::total_cmp);
    ks
}

/// Black-Scholes mids with a random relative half-spread up to `spread`.
pub fn random_snapshot(rng: &mut ChaCha8Rng, n: usize, strikes_per_time: usize, spread: f64) -> MarketSnapshot {
    let vol = rng.random_range(0.2..0.4);
    let mut quotes = Vec::new();
    for t in 1..=n {
        for k in random_strikes(rng, strikes_per_time, 30.0, 70.0) {
            let mid = bs_call_price(SPOT, vol, 0.5 * t as f64, k).unwrap();
            let bid = mid * (1.0 - rng.random_range(0.0..=spread));
            let ask = mid * (1.0 + rng.random_range(0.0..=spread));
            quotes.push(VanillaQuote::new(t, k, bid, ask));
        }
    }
    MarketSnapshot::new(n, quotes, Vec::new(), 0.0, 100.0).unwrap()
}

/// Bid and ask are Black-Scholes prices at volatilities `sigma -+ delta`,
/// so one model attains every bid and another every ask.
pub fn vol_range_snapshot(rng: &mut ChaCha8Rng, n: usize, strikes_per_time: usize) -> MarketSnapshot {
    let vol = rng.random_range(0.2..0.4);
    let delta = rng.random_range(0.005..0.05);
    let mut quotes = Vec::new();
    for t in 1..=n {
        for k in random_strikes(rng, strikes_per_time, 30.0, 70.0) {
            let maturity = 0.5 * t as f64;
            let bid = bs_call_price(SPOT, vol - delta, maturity, k).unwrap();
            let ask = bs_call_price(SPOT, vol + delta, maturity, k).unwrap();
            quotes.push(VanillaQuote::new(t, k, bid, ask));
        }
    }
    MarketSnapshot::new(n, quotes, Vec::new(), 0.0, 100.0).unwrap()
}

/// A piecewise-linear catalog payoff with levels inside the state box.
pub fn random_payoff(rng: &mut ChaCha8Rng, n: usize) -> PayoffSpec {
    let k = (rng.random_range(40.0..60.0f64) * 2.0).round() / 2.0;
    let lo = (rng.random_range(25.0..40.0f64)).round();
    let hi = (rng.random_range(60.0..75.0f64)).round();
    let t = rng.random_range(1..=n);
    match rng.random_range(0..10) {
        0 => PayoffSpec::Call { time_index: t, strike: k },
        1 => PayoffSpec::Put { time_index: t, strike: k },
        2 => PayoffSpec::BarrierDigital { lower: lo, upper: hi },
        3 => PayoffSpec::BarrierCall { lower: lo, upper: hi, strike: k },
        4 => PayoffSpec::BarrierPut { lower: lo, upper: hi, strike: k },
        5 => PayoffSpec::LookbackFixedCall { strike: k },
        6 => PayoffSpec::LookbackFloatPut,
        7 => PayoffSpec::AsianFixedPut { strike: k },
        8 => PayoffSpec::AsianFloatCall,
        _ => PayoffSpec::LookbackFixedPut { strike: k },
    }
}
