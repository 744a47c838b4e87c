//! Properties of the price bounds and their hedge certificates.

mod common;

use mfbounds_core::engine::{bs_monte_carlo, ReferenceModel, Strategy, VerdictKind, VolBand};
use mfbounds_core::{
    detect_arbitrage, price_bounds, ApproxMode, BoundsConfig, ExtraQuote, MarketSnapshot, PayoffSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bounds(snap: &MarketSnapshot, spec: &PayoffSpec) -> (f64, f64) {
    let r = price_bounds(snap, spec, &BoundsConfig::default()).unwrap();
    (r.lower, r.upper)
}

#[test]
fn quoted_calls_price_at_their_quotes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 2] {
        let snap = common::vol_range_snapshot(&mut rng, n, 4);
        for q in snap.quotes() {
            let (lo, up) = bounds(&snap, &PayoffSpec::Call { time_index: q.time_index, strike: q.strike });
            assert!((lo - q.bid).abs() <= 1e-6 && (up - q.ask).abs() <= 1e-6, "{q:?}: [{lo}, {up}]");
        }
    }
}

#[test]
fn increments_are_worth_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let snap = common::random_snapshot(&mut rng, 3, 2, 0.1);
    for step in 1..3 {
        for strategy in [Strategy::Full, Strategy::Decomposed] {
            let cfg = BoundsConfig { strategy, ..Default::default() };
            let r = price_bounds(&snap, &PayoffSpec::Increment { step }, &cfg).unwrap();
            assert!(r.lower.abs() <= 1e-8 && r.upper.abs() <= 1e-8, "step {step}: [{}, {}]", r.lower, r.upper);
        }
    }
}

/// Payoffs whose kinks sit on strikes already quoted at every date, so
/// adding them as extra quotes leaves the grid unchanged.
fn on_grid_extra(rng: &mut ChaCha8Rng, snap: &MarketSnapshot) -> PayoffSpec {
    let n = snap.n_times();
    let common: Vec<f64> = snap
        .quotes_at(1)
        .map(|q| q.strike)
        .filter(|&k| (2..=n).all(|t| snap.quotes_at(t).any(|q| q.strike == k)))
        .collect();
    let pick = |rng: &mut ChaCha8Rng| common[rng.random_range(0..common.len())];
    let (a, b) = (pick(rng), pick(rng));
    let (lo, hi) = (a.min(b), a.max(b) + if a == b { 100.0 - a.max(b) } else { 0.0 });
    match rng.random_range(0..3) {
        0 => PayoffSpec::BarrierDigital { lower: lo, upper: hi },
        1 => PayoffSpec::BarrierCall { lower: lo, upper: hi, strike: pick(rng) },
        _ => PayoffSpec::Put { time_index: rng.random_range(1..=n), strike: pick(rng) },
    }
}

#[test]
fn extra_quotes_never_widen_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let strikes: Vec<f64> = (0..5).map(|k| 40.0 + 5.0 * k as f64).collect();
    let base = mfbounds_core::synthesize_snapshot(50.0, 0.3, 0.5, 2, &strikes, 100.0).unwrap();
    let target = PayoffSpec::BarrierCall { lower: 40.0, upper: 60.0, strike: 50.0 };
    let (lo0, up0) = bounds(&base, &target);
    let mut augmented = 0;
    while augmented < 10 {
        let extra = on_grid_extra(&mut rng, &base);
        let (elo, eup) = bounds(&base, &extra);
        if eup - elo < 1e-6 {
            continue;
        }
        // any band inside the attainable range is consistent with the quotes
        let bid = elo + rng.random_range(0.0..0.9) * (eup - elo);
        let ask = bid + rng.random_range(0.05..1.0) * (eup - bid);
        let snap = base.with_extra(ExtraQuote::new(extra.clone(), bid, ask)).unwrap();
        let (lo, up) = bounds(&snap, &target);
        assert!(lo >= lo0 - 1e-8 && up <= up0 + 1e-8, "{extra:?} [{bid}, {ask}]: [{lo}, {up}] vs [{lo0}, {up0}]");
        augmented += 1;
    }
}

#[test]
fn bisection_leaves_digital_bounds_unchanged() {
    let snap = common::ladder_snapshot(2);
    let spec = PayoffSpec::BarrierDigital { lower: 34.0, upper: 56.0 };
    let cfg = BoundsConfig { strategy: Strategy::Decomposed, ..Default::default() };
    let coarse = price_bounds(&snap, &spec, &cfg).unwrap();
    let fine = price_bounds(&snap, &spec, &BoundsConfig { bisections: 1, ..cfg }).unwrap();
    assert!(fine.grid.cells > coarse.grid.cells);
    assert!((fine.lower - coarse.lower).abs() <= 1e-6, "{} vs {}", fine.lower, coarse.lower);
    assert!((fine.upper - coarse.upper).abs() <= 1e-6, "{} vs {}", fine.upper, coarse.upper);
}

#[test]
fn certificates_replicate_and_cost_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut cases: Vec<(MarketSnapshot, PayoffSpec)> = vec![
        (common::ladder_snapshot(2), PayoffSpec::BarrierDigital { lower: 34.0, upper: 56.0 }),
        (common::ladder_snapshot(2), PayoffSpec::BarrierCall { lower: 34.0, upper: 56.0, strike: 50.0 }),
    ];
    for _ in 0..4 {
        let snap = common::random_snapshot(&mut rng, 2, 3, 0.05);
        let spec = common::random_payoff(&mut rng, 2);
        cases.push((snap, spec));
    }
    for (snap, spec) in cases {
        for strategy in [Strategy::Full, Strategy::Decomposed] {
            let cfg = BoundsConfig { strategy, certificate_samples: 10_000, ..Default::default() };
            let r = price_bounds(&snap, &spec, &cfg).unwrap();
            for (bound, cert) in [(r.lower, &r.lower_certificate), (r.upper, &r.upper_certificate)] {
                assert!(cert.sampled_margin >= -1e-6, "{spec:?} {strategy:?}: sampled {}", cert.sampled_margin);
                assert!(cert.vertex_margin >= -1e-6, "{spec:?} {strategy:?}: vertex {}", cert.vertex_margin);
                assert!((cert.cost - bound).abs() <= 1e-8 * (1.0 + bound.abs()), "{spec:?} {strategy:?}: {} vs {bound}", cert.cost);
            }
        }
    }
}

#[test]
fn strategies_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let snap = common::random_snapshot(&mut rng, 2, 3, 0.05);
        let spec = common::random_payoff(&mut rng, 2);
        let full = price_bounds(&snap, &spec, &BoundsConfig { strategy: Strategy::Full, ..Default::default() }).unwrap();
        let cg = price_bounds(&snap, &spec, &BoundsConfig { strategy: Strategy::Decomposed, ..Default::default() }).unwrap();
        assert!((full.lower - cg.lower).abs() <= 1e-7 && (full.upper - cg.upper).abs() <= 1e-7, "{spec:?}");
    }
}

#[test]
fn mispriced_trade_comes_with_a_hedge() {
    let snap = common::ladder_snapshot(2);
    let spec = PayoffSpec::BarrierDigital { lower: 34.0, upper: 56.0 };
    let r = price_bounds(&snap, &spec, &BoundsConfig::default()).unwrap();
    assert_eq!(detect_arbitrage(&r, 0.45).kind, VerdictKind::Inside);
    let v = detect_arbitrage(&r, 0.7);
    assert_eq!(v.kind, VerdictKind::AboveUpper);
    let cert = v.certificate.unwrap();
    // sell the digital at 0.7, buy the hedge for its cost
    assert!(0.7 - cert.cost > 0.08 && cert.vertex_margin >= -1e-9);
    assert_eq!(detect_arbitrage(&r, 0.1).kind, VerdictKind::BelowLower);
}

#[test]
fn variance_swap_lower_bound_is_below_black_scholes() {
    let snap = common::ladder_snapshot(2);
    let spec = PayoffSpec::VarianceSwap { spot: None };
    let cfg = BoundsConfig {
        approx: Some(ApproxMode::Under),
        reference: Some(ReferenceModel { spot: 50.0, vol: 0.3, step: 0.5 }),
        ..Default::default()
    };
    let r = price_bounds(&snap, &spec, &cfg).unwrap();
    let (mc, se) = bs_monte_carlo(&spec, 50.0, 0.3, 0.5, 2, 100_000, 3).unwrap();
    assert!(r.lower <= mc + 3.0 * se, "{} vs {mc} +- {se}", r.lower);
    assert!(!r.warnings.is_empty());
}

#[test]
fn volatility_band_never_widens_variance_bounds() {
    let snap = common::ladder_snapshot(2);
    let spec = PayoffSpec::VarianceSwap { spot: None };
    let plain = BoundsConfig { approx: Some(ApproxMode::Bracket), ..Default::default() };
    let banded = BoundsConfig { vol_band: Some(VolBand { sigma_lo: 0.25, sigma_hi: 0.35, step: 0.5 }), ..plain.clone() };
    let a = price_bounds(&snap, &spec, &plain).unwrap();
    let b = price_bounds(&snap, &spec, &banded).unwrap();
    assert!(b.lower >= a.lower - 1e-8 && b.upper <= a.upper + 1e-8);
}
