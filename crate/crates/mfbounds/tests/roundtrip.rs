use std::sync::Arc;

use mfbounds::io::{load_snapshot, save_snapshot, snapshot_from_json, snapshot_to_json, SnapshotFormat};
use mfbounds::lp_format::{parse_lp, write_lp};
use mfbounds_core::dual::BoundSide;
use mfbounds_core::lp::VarBlock;
use mfbounds_core::{
    build_dual, solve, synthesize_snapshot, ExtraQuote, Grid, LinearProgram, MarketSnapshot, PayoffSpec,
    Relation, Sense, SolverOptions, VanillaQuote,
};
use proptest::prelude::*;

fn quotes_strategy() -> impl Strategy<Value = (usize, Vec<VanillaQuote>)> {
    (1usize..=3).prop_flat_map(|n| {
        let quote = (1..=n, 0.01f64..500.0, 0.0f64..100.0, 0.0f64..5.0)
            .prop_map(|(t, k, bid, spread)| VanillaQuote::new(t, k, bid, bid + spread));
        (Just(n), prop::collection::vec(quote, n..4 * n + 4))
    })
}

/// Every date gets a quote so the snapshot is valid.
fn cover(n: usize, mut quotes: Vec<VanillaQuote>) -> Vec<VanillaQuote> {
    for t in 1..=n {
        if !quotes.iter().any(|q| q.time_index == t) {
            quotes.push(VanillaQuote::new(t, 1.0 + t as f64, 0.5, 0.75));
        }
    }
    quotes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trips_exactly((n, quotes) in quotes_strategy()) {
        let snap = MarketSnapshot::with_default_bounds(n, cover(n, quotes)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        save_snapshot(&path, &snap, SnapshotFormat::Csv).unwrap();
        prop_assert_eq!(load_snapshot(&path, SnapshotFormat::Csv).unwrap(), snap);
    }

    #[test]
    fn json_round_trips_exactly(
        (n, quotes) in quotes_strategy(),
        headroom in 1.0f64..1e3,
        lower in 0.0f64..0.01,
        sides in prop::collection::vec((prop::option::of(0.0f64..1.0), prop::option::of(1.0f64..2.0)), 0..3),
    ) {
        let quotes = cover(n, quotes);
        let max_k = quotes.iter().map(|q| q.strike).fold(0.0, f64::max);
        let extras: Vec<ExtraQuote> = sides
            .into_iter()
            .filter(|(b, a)| b.is_some() || a.is_some())
            .map(|(b, a)| {
                ExtraQuote::new(
                    PayoffSpec::Put { time_index: 1, strike: max_k },
                    b.unwrap_or(f64::NEG_INFINITY),
                    a.unwrap_or(f64::INFINITY),
                )
            })
            .collect();
        let snap = MarketSnapshot::new(n, quotes, extras, lower, max_k + headroom).unwrap();
        prop_assert_eq!(&snapshot_from_json(snapshot_to_json(&snap).as_bytes()).unwrap(), &snap);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        save_snapshot(&path, &snap, SnapshotFormat::Json).unwrap();
        prop_assert_eq!(load_snapshot(&path, SnapshotFormat::Json).unwrap(), snap);
    }

    #[test]
    fn lp_text_round_trips(lp in lp_strategy()) {
        let text = write_lp(&lp).unwrap();
        let back = parse_lp(&text).unwrap();
        prop_assert_eq!(&back, &lp);
        prop_assert_eq!(write_lp(&back).unwrap(), text);
    }
}

fn coefficient() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1e3f64..1e3).prop_filter("nonzero", |v| *v != 0.0),
        Just(1.0),
        Just(-1.0),
        Just(1e-300),
        Just(-7.5e12),
        Just(f64::MIN_POSITIVE),
    ]
}

fn lp_strategy() -> impl Strategy<Value = LinearProgram> {
    (1usize..12, 0usize..8, any::<bool>()).prop_flat_map(|(n_vars, n_rows, maximize)| {
        let bound = prop_oneof![Just(f64::NEG_INFINITY), -10.0f64..0.0, Just(0.0)];
        let upper = prop_oneof![Just(f64::INFINITY), 0.0f64..10.0];
        let var = (prop_oneof![Just(0.0), coefficient()], bound, upper);
        let row = (0usize..3, prop_oneof![Just(0.0), Just(-0.0), -50.0f64..50.0]);
        let entries = prop::collection::vec((0..n_vars, 0..n_rows.max(1), coefficient()), 0..3 * n_vars);
        (
            prop::collection::vec(var, n_vars),
            prop::collection::vec(row, n_rows),
            entries,
            Just(maximize),
            0usize..=n_vars,
        )
            .prop_map(move |(vars, rows, entries, maximize, split)| {
                let mut lp = LinearProgram::new(if maximize { Sense::Maximize } else { Sense::Minimize });
                for (j, (cost, lo, hi)) in vars.into_iter().enumerate() {
                    lp.add_var(format!("x_{}", j + 1), cost, lo, hi.max(lo));
                }
                for (i, (rel, rhs)) in rows.into_iter().enumerate() {
                    let rel = [Relation::LessEq, Relation::Equal, Relation::GreaterEq][rel];
                    lp.add_row(format!("r{}", i + 1), rel, rhs);
                }
                if lp.n_rows() > 0 {
                    for (j, r, a) in entries {
                        if !lp.columns[j].iter().any(|&(row, _)| row == r) {
                            lp.columns[j].push((r, a));
                        }
                    }
                    for col in &mut lp.columns {
                        col.sort_by_key(|&(r, _)| r);
                    }
                }
                lp.blocks = vec![
                    VarBlock { name: "head".into(), start: 0, len: split },
                    VarBlock { name: "tail".into(), start: split, len: n_vars - split },
                ];
                lp
            })
    })
}

#[test]
fn hedge_program_survives_the_text_format() {
    let strikes: Vec<f64> = (15..=30).map(|k| 2.0 * k as f64).collect();
    let snap = synthesize_snapshot(50.0, 0.3, 0.5, 2, &strikes, 100.0).unwrap();
    let spec = PayoffSpec::BarrierDigital { lower: 34.0, upper: 56.0 };
    let grid = Arc::new(Grid::build(&snap, &spec.grid_levels(2)).unwrap());
    let payoff = spec.to_pwl(&grid, None).unwrap();
    for side in [BoundSide::Lower, BoundSide::Upper] {
        let d = build_dual(&snap, &grid, &payoff, side).unwrap();
        let back = parse_lp(&write_lp(&d.lp).unwrap()).unwrap();
        assert_eq!(back, d.lp);
        let opts = SolverOptions::default();
        let a = solve(&d.lp, &opts).unwrap();
        let b = solve(&back, &opts).unwrap();
        assert_eq!(a.objective, b.objective);
    }
}
