//! Model-free price bounds for discretely monitored path-dependent options.
//!
//! Given bid/ask quotes on vanilla calls at the monitoring dates, the crate
//! computes the cheapest semi-static super-replicating hedge (upper bound) and
//! the richest sub-replicating hedge (lower bound) of a piecewise-linear
//! payoff. Positivity of the hedge minus payoff on every cell of a box
//! partition of the state space is turned into finitely many linear
//! constraints through Farkas multipliers, and the resulting linear program is
//! solved with an in-crate revised simplex.
//!
//! A measure-side linear program over cell vertices is assembled separately
//! ([`primal`]) and serves as an oracle: both programs must reach the same
//! optimum.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, IO and the
//! command-line front end live in the `mfbounds` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dual;
pub mod engine;
mod error;
pub mod grid;
pub mod lp;
pub mod market;
pub mod payoff;
pub mod primal;
pub mod pwl;
pub mod quadrature;
pub mod simplex;

pub use error::{Error, Result};

pub use dual::{build_dual, farkas_encode, martingale_tests, BoundSide, DualProblem};
pub use engine::{
    bs_reference_price, detect_arbitrage, price_bounds, volatility_band_constraints, BoundsConfig,
    BoundsReport, HedgeCertificate, Verdict,
};
pub use grid::{Cell, Grid};
pub use lp::{LinearProgram, LpSolution, LpStatus, Relation, Sense};
pub use market::{
    bs_call_price, check_quote_sanity, synthesize_snapshot, ExtraQuote, MarketSnapshot,
    VanillaQuote,
};
pub use payoff::{ApproxMode, PayoffSpec};
pub use primal::{build_primal, check_martingale, extract_measure, AtomicMeasure};
pub use pwl::{Affine, HalfSpace, PiecewiseLinearFunction};
pub use simplex::{solve, solve_column_generation, ColumnSource, SolverOptions};
