use alloc::string::String;
use alloc::vec::Vec;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("quote {index} (time {time_index}, strike {strike}): {reason}")]
    InvalidQuote {
        index: usize,
        time_index: usize,
        strike: f64,
        reason: &'static str,
    },

    #[error("extra quote {index}: {reason}")]
    InvalidExtraQuote { index: usize, reason: &'static str },

    #[error("no quotes for time index {0}")]
    MissingQuotes(usize),

    #[error("no strikes")]
    NoStrikes,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {value} at time {time_index} lies outside the state box [{lower}, {upper}]")]
    OutsideStateBox {
        time_index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{what} {value} is off-grid at time {time_index}")]
    OffGrid {
        what: &'static str,
        value: f64,
        time_index: usize,
    },

    #[error("payoff is not affine on cell {cell:?}; refine the grid")]
    NotAffine { cell: Vec<usize> },

    #[error("level {k} out of range 1..={max}")]
    LevelOutOfRange { k: usize, max: usize },

    #[error("point outside the state space")]
    OutsideDomain,

    #[error("functions are defined on different grids")]
    GridMismatch,

    #[error("approximation mode {0} needs a convexity declaration for every cell")]
    MissingCurvature(&'static str),

    #[error("payoff `{0}` is not piecewise linear; an approximation mode is required")]
    ApproximationRequired(String),

    #[error("market data admits no consistent measure under this discretization")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("solver stopped: {0:?}")]
    NotOptimal(LpStatus),

    #[error("vertex product set has {atoms} atoms, above the cap of {cap}; use a coarser grid")]
    TooManyAtoms { atoms: usize, cap: usize },

    #[error("no measure: solution status is {0:?}")]
    NoMeasure(LpStatus),

    #[error("sigma_hi ({hi}) is below sigma_lo ({lo})")]
    InvalidVolBand { lo: f64, hi: f64 },
}
