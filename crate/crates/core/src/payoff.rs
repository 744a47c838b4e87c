//! Payoff catalog and its piecewise-affine representation on a grid.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{Cell, Grid};
use crate::pwl::{vertex_fit, Affine, FitMode, PiecewiseLinearFunction};
use crate::{Error, Result};

/// Affine data for one cell of a user-supplied payoff.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineSpec {
    pub gradient: Vec<f64>,
    pub offset: f64,
}

/// Payoffs of the catalog. Time indices and steps are 1-based monitoring
/// dates; `x_i` below is the price at date `i`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "type", content = "params", rename_all = "snake_case")
)]
pub enum PayoffSpec {
    /// `(x_t - K)^+`
    Call { time_index: usize, strike: f64 },
    /// `(K - x_t)^+`
    Put { time_index: usize, strike: f64 },
    /// 1 if every `x_i` lies in `[lower, upper]`.
    BarrierDigital { lower: f64, upper: f64 },
    /// `(x_n - K)^+` if every `x_i` lies in `[lower, upper]`.
    BarrierCall { lower: f64, upper: f64, strike: f64 },
    BarrierPut { lower: f64, upper: f64, strike: f64 },
    /// `(max_i x_i - K)^+`
    LookbackFixedCall { strike: f64 },
    /// `(K - min_i x_i)^+`
    LookbackFixedPut { strike: f64 },
    /// `x_n - min_i x_i`
    LookbackFloatCall,
    /// `max_i x_i - x_n`
    LookbackFloatPut,
    /// `(mean_i x_i - K)^+`
    AsianFixedCall { strike: f64 },
    AsianFixedPut { strike: f64 },
    /// `x_n - mean_i x_i` (signed)
    AsianFloatCall,
    /// `mean_i x_i - x_n` (signed)
    AsianFloatPut,
    /// `sum_{i<n} ln(x_{i+1}/x_i)^2`, plus `ln(x_1/spot)^2` when `spot` is set.
    VarianceSwap {
        #[cfg_attr(feature = "serde", serde(default))]
        spot: Option<f64>,
    },
    /// `ln(x_{step+1}/x_step)^2`
    SquaredLogReturn { step: usize },
    /// `x_{step+1} - x_step`
    Increment { step: usize },
    Constant { value: f64 },
    /// Explicit affine data on the cells of its own grid (`points`), in
    /// lexicographic cell order. The pricing grid must contain `points`.
    CustomPwl {
        points: Vec<Vec<f64>>,
        cells: Vec<AffineSpec>,
    },
}

/// How a payoff that is not piecewise linear is replaced by one that is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum ApproxMode {
    Interpolate,
    Under,
    Over,
    /// Over-approximation for the upper bound, under for the lower.
    Bracket,
}

impl ApproxMode {
    /// Fit used for a bound on the given side.
    pub fn fit(self, upper: bool) -> FitMode {
        match self {
            ApproxMode::Interpolate => FitMode::Interpolate,
            ApproxMode::Under => FitMode::Under,
            ApproxMode::Over => FitMode::Over,
            ApproxMode::Bracket if upper => FitMode::Over,
            ApproxMode::Bracket => FitMode::Under,
        }
    }
}

/// Whether a reported bound is guaranteed for the true payoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Validity {
    /// Payoff represented exactly.
    Exact,
    /// Approximated in the direction that keeps the bound valid.
    Conservative,
    /// Approximated without a direction guarantee.
    Heuristic,
}

impl Validity {
    pub fn of(fit: Option<FitMode>, upper: bool) -> Self {
        match fit {
            None => Validity::Exact,
            Some(FitMode::Over) if upper => Validity::Conservative,
            Some(FitMode::Under) if !upper => Validity::Conservative,
            Some(_) => Validity::Heuristic,
        }
    }
}

pub const CATALOG: &[&str] = &[
    "call",
    "put",
    "barrier_digital",
    "barrier_call",
    "barrier_put",
    "lookback_fixed_call",
    "lookback_fixed_put",
    "lookback_float_call",
    "lookback_float_put",
    "asian_fixed_call",
    "asian_fixed_put",
    "asian_float_call",
    "asian_float_put",
    "variance_swap",
    "squared_log_return",
    "increment",
    "constant",
    "custom_pwl",
];

impl PayoffSpec {
    pub fn name(&self) -> &'static str {
        use PayoffSpec::*;
        match self {
            Call { .. } => "call",
            Put { .. } => "put",
            BarrierDigital { .. } => "barrier_digital",
            BarrierCall { .. } => "barrier_call",
            BarrierPut { .. } => "barrier_put",
            LookbackFixedCall { .. } => "lookback_fixed_call",
            LookbackFixedPut { .. } => "lookback_fixed_put",
            LookbackFloatCall => "lookback_float_call",
            LookbackFloatPut => "lookback_float_put",
            AsianFixedCall { .. } => "asian_fixed_call",
            AsianFixedPut { .. } => "asian_fixed_put",
            AsianFloatCall => "asian_float_call",
            AsianFloatPut => "asian_float_put",
            VarianceSwap { .. } => "variance_swap",
            SquaredLogReturn { .. } => "squared_log_return",
            Increment { .. } => "increment",
            Constant { .. } => "constant",
            CustomPwl { .. } => "custom_pwl",
        }
    }

    /// False for the log-return payoffs, which need an approximation mode.
    pub fn is_piecewise_linear(&self) -> bool {
        !self.needs_positive_state()
    }

    pub fn needs_positive_state(&self) -> bool {
        matches!(
            self,
            PayoffSpec::VarianceSwap { .. } | PayoffSpec::SquaredLogReturn { .. }
        )
    }

    /// Checks parameters against the number of monitoring dates.
    pub fn validate(&self, n_times: usize) -> Result<()> {
        use PayoffSpec::*;
        let bad = |msg: &str| Err(Error::InvalidInput(alloc::format!("{}: {msg}", self.name())));
        match self {
            Call { time_index, strike } | Put { time_index, strike } => {
                if *time_index == 0 || *time_index > n_times {
                    return bad("time_index out of range");
                }
                if !(strike.is_finite() && *strike >= 0.0) {
                    return bad("strike must be finite and nonnegative");
                }
            }
            BarrierDigital { lower, upper }
            | BarrierCall { lower, upper, .. }
            | BarrierPut { lower, upper, .. } => {
                if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
                    return bad("barriers must satisfy lower < upper");
                }
            }
            SquaredLogReturn { step } | Increment { step } => {
                if *step == 0 || *step >= n_times {
                    return bad("step out of range");
                }
            }
            VarianceSwap { spot: Some(s) } if !(s.is_finite() && *s > 0.0) => {
                return bad("spot must be positive");
            }
            CustomPwl { points, cells } => {
                if points.len() != n_times {
                    return bad("points must list one axis per monitoring date");
                }
                let own = Grid::new(points.clone())?;
                if cells.len() != own.cell_count() || cells.iter().any(|c| c.gradient.len() != n_times) {
                    return bad("cell data does not match its grid");
                }
            }
            _ => {}
        }
        if let Some(k) = self.strike() {
            if !(k.is_finite() && k >= 0.0) {
                return bad("strike must be finite and nonnegative");
            }
        }
        Ok(())
    }

    fn strike(&self) -> Option<f64> {
        use PayoffSpec::*;
        match *self {
            Call { strike, .. }
            | Put { strike, .. }
            | BarrierCall { strike, .. }
            | BarrierPut { strike, .. }
            | LookbackFixedCall { strike }
            | LookbackFixedPut { strike }
            | AsianFixedCall { strike }
            | AsianFixedPut { strike } => Some(strike),
            _ => None,
        }
    }

    /// Payoff of a price path `x` (one entry per monitoring date).
    pub fn eval_path(&self, x: &[f64]) -> f64 {
        use PayoffSpec::*;
        let n = x.len();
        let last = x[n - 1];
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = x.iter().sum::<f64>() / n as f64;
        let inside = |lo: f64, hi: f64| x.iter().all(|&v| v >= lo && v <= hi);
        match self {
            Call { time_index, strike } => (x[time_index - 1] - strike).max(0.0),
            Put { time_index, strike } => (strike - x[time_index - 1]).max(0.0),
            BarrierDigital { lower, upper } => f64::from(u8::from(inside(*lower, *upper))),
            BarrierCall { lower, upper, strike } if inside(*lower, *upper) => (last - strike).max(0.0),
            BarrierPut { lower, upper, strike } if inside(*lower, *upper) => (strike - last).max(0.0),
            BarrierCall { .. } | BarrierPut { .. } => 0.0,
            LookbackFixedCall { strike } => (max - strike).max(0.0),
            LookbackFixedPut { strike } => (strike - min).max(0.0),
            LookbackFloatCall => last - min,
            LookbackFloatPut => max - last,
            AsianFixedCall { strike } => (mean - strike).max(0.0),
            AsianFixedPut { strike } => (strike - mean).max(0.0),
            AsianFloatCall => last - mean,
            AsianFloatPut => mean - last,
            VarianceSwap { spot } => {
                let legs: f64 = x.windows(2).map(|w| sq_log(w[1] / w[0])).sum();
                legs + spot.map_or(0.0, |s| sq_log(x[0] / s))
            }
            SquaredLogReturn { step } => sq_log(x[*step] / x[step - 1]),
            Increment { step } => x[*step] - x[step - 1],
            Constant { value } => *value,
            CustomPwl { points, cells } => {
                let own = Grid::new(points.clone()).expect("validated custom grid");
                match own.locate(x) {
                    Some(idx) => {
                        let c = &cells[own.cell_linear_index(&idx)];
                        Affine::new(c.gradient.clone(), c.offset).eval(x)
                    }
                    None => 0.0,
                }
            }
        }
    }

    /// Levels that must be grid points, per monitoring date, for the
    /// representation to be exact without cuts.
    pub fn grid_levels(&self, n_times: usize) -> Vec<Vec<f64>> {
        use PayoffSpec::*;
        let mut levels = vec![Vec::new(); n_times];
        match self {
            Call { time_index, strike } | Put { time_index, strike } => {
                levels[time_index - 1].push(*strike);
            }
            BarrierDigital { lower, upper } => {
                for l in &mut levels {
                    l.extend([*lower, *upper]);
                }
            }
            BarrierCall { lower, upper, strike } | BarrierPut { lower, upper, strike } => {
                for l in &mut levels {
                    l.extend([*lower, *upper]);
                }
                levels[n_times - 1].push(*strike);
            }
            CustomPwl { points, .. } => {
                for (l, p) in levels.iter_mut().zip(points) {
                    l.extend(p.iter().copied());
                }
            }
            _ => {}
        }
        levels
    }

    /// Piecewise-affine representation on `grid`. Log-return payoffs need a
    /// fit mode; the others ignore it.
    pub fn to_pwl(&self, grid: &Arc<Grid>, fit: Option<FitMode>) -> Result<PiecewiseLinearFunction> {
        use PayoffSpec::*;
        let n = grid.n_times();
        self.validate(n)?;
        let coord = |i: usize| PiecewiseLinearFunction::coordinate(grid, i);
        let zero = || PiecewiseLinearFunction::constant(grid, 0.0);
        let mean = || PiecewiseLinearFunction::affine(grid, Affine::new(vec![1.0 / n as f64; n], 0.0));
        let pos = |f: PiecewiseLinearFunction| f.max(&zero());
        let shifted = |f: PiecewiseLinearFunction, c: f64| f.add_scaled(1.0, &PiecewiseLinearFunction::constant(grid, c));
        let fold = |take_max: bool| -> Result<PiecewiseLinearFunction> {
            let mut acc = coord(0);
            for i in 1..n {
                acc = if take_max { acc.max(&coord(i))? } else { acc.min(&coord(i))? };
            }
            Ok(acc)
        };
        let f = match self {
            Call { time_index, strike } => vanilla(grid, time_index - 1, *strike, 1.0)?,
            Put { time_index, strike } => vanilla(grid, time_index - 1, *strike, -1.0)?,
            BarrierDigital { lower, upper } => barrier(grid, *lower, *upper, |_| Affine::constant(n, 1.0))?,
            BarrierCall { lower, upper, strike } => {
                let h = vanilla(grid, n - 1, *strike, 1.0)?;
                barrier(grid, *lower, *upper, |c| cell_affine(&h, grid, c))?
            }
            BarrierPut { lower, upper, strike } => {
                let h = vanilla(grid, n - 1, *strike, -1.0)?;
                barrier(grid, *lower, *upper, |c| cell_affine(&h, grid, c))?
            }
            LookbackFixedCall { strike } => pos(shifted(fold(true)?, -strike)?)?,
            LookbackFixedPut { strike } => pos(shifted(fold(false)?.scaled(-1.0), *strike)?)?,
            LookbackFloatCall => coord(n - 1).add_scaled(-1.0, &fold(false)?)?,
            LookbackFloatPut => fold(true)?.add_scaled(-1.0, &coord(n - 1))?,
            AsianFixedCall { strike } => pos(shifted(mean(), -strike)?)?,
            AsianFixedPut { strike } => pos(shifted(mean().scaled(-1.0), *strike)?)?,
            AsianFloatCall => coord(n - 1).add_scaled(-1.0, &mean())?,
            AsianFloatPut => mean().add_scaled(-1.0, &coord(n - 1))?,
            Increment { step } => coord(*step).add_scaled(-1.0, &coord(step - 1))?,
            Constant { value } => PiecewiseLinearFunction::constant(grid, *value),
            CustomPwl { points, cells } => custom(grid, points, cells)?,
            VarianceSwap { spot } => {
                let fit = fit.ok_or_else(|| Error::ApproximationRequired(self.name().to_string()))?;
                let mut legs: Vec<(Option<usize>, usize)> = (1..n).map(|i| (Some(i - 1), i)).collect();
                if spot.is_some() {
                    legs.insert(0, (None, 0));
                }
                log_legs(grid, &legs, spot.unwrap_or(1.0), fit)?
            }
            SquaredLogReturn { step } => {
                let fit = fit.ok_or_else(|| Error::ApproximationRequired(self.name().to_string()))?;
                log_legs(grid, &[(Some(step - 1), *step)], 1.0, fit)?
            }
        };
        let continuous = !matches!(self, BarrierDigital { .. } | BarrierCall { .. } | BarrierPut { .. } | CustomPwl { .. });
        Ok(f.declared_continuous(continuous && self.is_piecewise_linear()))
    }
}

fn sq_log(ratio: f64) -> f64 {
    let r = libm::log(ratio);
    r * r
}

fn cell_affine(f: &PiecewiseLinearFunction, grid: &Grid, cell: &Cell) -> Affine {
    f.pieces(grid.cell_linear_index(&cell.index))[0].affine.clone()
}

fn require_on_grid(grid: &Grid, i: usize, value: f64, what: &'static str) -> Result<()> {
    let inside = value > grid.lower(i) && value < grid.upper(i);
    if inside && !grid.is_grid_point(i, value) {
        return Err(Error::OffGrid {
            what,
            value,
            time_index: i + 1,
        });
    }
    Ok(())
}

/// `(sign * (x_i - K))^+` with the kink on a grid hyperplane.
fn vanilla(grid: &Arc<Grid>, i: usize, strike: f64, sign: f64) -> Result<PiecewiseLinearFunction> {
    require_on_grid(grid, i, strike, "strike")?;
    let n = grid.n_times();
    let tol = 1e-9 * (grid.upper(i) - grid.lower(i));
    Ok(PiecewiseLinearFunction::from_cells(grid, |cell| {
        let mid = 0.5 * (cell.lo[i] + cell.hi[i]);
        let active = if sign > 0.0 { mid > strike + tol } else { mid < strike - tol };
        Ok(if active {
            let mut a = Affine::coordinate(n, i).scaled(sign);
            a.offset = -sign * strike;
            a
        } else {
            Affine::zero(n)
        })
    })?
    .declared_continuous(true))
}

fn barrier<F: Fn(&Cell) -> Affine>(grid: &Arc<Grid>, lower: f64, upper: f64, inner: F) -> Result<PiecewiseLinearFunction> {
    let n = grid.n_times();
    for i in 0..n {
        require_on_grid(grid, i, lower, "barrier")?;
        require_on_grid(grid, i, upper, "barrier")?;
    }
    PiecewiseLinearFunction::from_cells(grid, |cell| {
        let inside = (0..n).all(|i| {
            let mid = 0.5 * (cell.lo[i] + cell.hi[i]);
            mid > lower && mid < upper
        });
        Ok(if inside { inner(cell) } else { Affine::zero(n) })
    })
}

fn custom(grid: &Arc<Grid>, points: &[Vec<f64>], cells: &[AffineSpec]) -> Result<PiecewiseLinearFunction> {
    let own = Grid::new(points.to_vec())?;
    for (i, axis) in points.iter().enumerate() {
        for &p in axis {
            require_on_grid(grid, i, p, "custom payoff grid point")?;
        }
    }
    let n = grid.n_times();
    PiecewiseLinearFunction::from_cells(grid, |cell| {
        let c = cell.barycenter();
        Ok(match own.locate(&c) {
            Some(idx) => {
                let s = &cells[own.cell_linear_index(&idx)];
                Affine::new(s.gradient.clone(), s.offset)
            }
            None => Affine::zero(n),
        })
    })
}

/// Affine bounds of `ln x_i` on `[lo, hi]`: the chord lies below, the
/// tangent at the midpoint above.
fn log_bounds(n: usize, i: usize, lo: f64, hi: f64) -> (Affine, Affine) {
    let (llo, lhi) = (libm::log(lo), libm::log(hi));
    let slope = if hi > lo { (lhi - llo) / (hi - lo) } else { 1.0 / lo };
    let mut chord = Affine::coordinate(n, i).scaled(slope);
    chord.offset = llo - slope * lo;
    let t = 0.5 * (lo + hi);
    let mut tangent = Affine::coordinate(n, i).scaled(1.0 / t);
    tangent.offset = libm::log(t) - 1.0;
    (chord, tangent)
}

/// Sum of squared log returns `ln(x_b / x_a)^2` over `legs`, where `a = None`
/// stands for the fixed level `spot`.
fn log_legs(grid: &Arc<Grid>, legs: &[(Option<usize>, usize)], spot: f64, fit: FitMode) -> Result<PiecewiseLinearFunction> {
    let n = grid.n_times();
    for i in 0..n {
        if grid.lower(i) <= 0.0 {
            return Err(Error::InvalidInput(
                "log-return payoffs need a positive state lower bound".to_string(),
            ));
        }
    }
    let value = |x: &[f64]| -> f64 {
        legs.iter()
            .map(|&(a, b)| sq_log(x[b] / a.map_or(spot, |a| x[a])))
            .sum()
    };
    PiecewiseLinearFunction::from_cells(grid, |cell| {
        if fit == FitMode::Interpolate {
            return Ok(vertex_fit(cell, value));
        }
        let mut total = Affine::zero(n);
        for &(a, b) in legs {
            let (b_chord, b_tan) = log_bounds(n, b, cell.lo[b], cell.hi[b]);
            let (a_chord, a_tan, a_lo, a_hi) = match a {
                Some(a) => {
                    let (c, t) = log_bounds(n, a, cell.lo[a], cell.hi[a]);
                    (c, t, cell.lo[a], cell.hi[a])
                }
                None => {
                    let c = Affine::constant(n, libm::log(spot));
                    (c.clone(), c, spot, spot)
                }
            };
            // r = ln x_b - ln x_a lies between these two affine functions
            let r_lower = b_chord.minus(&a_tan);
            let r_upper = b_tan.minus(&a_chord);
            let leg = match fit {
                FitMode::Under => {
                    // r^2 >= 2 r0 r - r0^2
                    let r0 = libm::log(0.5 * (cell.lo[b] + cell.hi[b]) / (0.5 * (a_lo + a_hi)));
                    let r = if r0 >= 0.0 { &r_lower } else { &r_upper };
                    let mut l = r.scaled(2.0 * r0);
                    l.offset -= r0 * r0;
                    l
                }
                _ => {
                    // chord of r^2 over [rmin, rmax]
                    let rmin = libm::log(cell.lo[b] / a_hi);
                    let rmax = libm::log(cell.hi[b] / a_lo);
                    let s = rmin + rmax;
                    let r = if s >= 0.0 { &r_upper } else { &r_lower };
                    let mut l = r.scaled(s);
                    l.offset -= rmin * rmax;
                    l
                }
            };
            total.add_scaled(1.0, &leg);
        }
        Ok(total)
    })
}
