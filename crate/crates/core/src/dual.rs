//! Hedge-side linear program: the cheapest combination of vanilla
//! positions, extra instruments, box-triggered forward trades and cash that
//! dominates the payoff on every cell.
//!
//! Dominance on a region is an affine inequality on a polytope and is
//! replaced by Farkas multipliers: `u = sum_j lambda_j f_j` and
//! `beta + sum_j lambda_j l_j >= 0` with `lambda >= 0`, where `(u, beta)` is
//! the affine excess of hedge over payoff and `<f_j, x> >= l_j` are the
//! region's faces.

use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{AdjacentBox, Cell, Grid};
use crate::lp::{LinearProgram, Relation, Sense};
use crate::market::MarketSnapshot;
use crate::pwl::{overlay_functions, Affine, HalfSpace, PiecewiseLinearFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum BoundSide {
    Upper,
    Lower,
}

impl BoundSide {
    pub fn is_upper(self) -> bool {
        self == BoundSide::Upper
    }

    /// +1 for the upper bound, -1 for the lower (payoff negation).
    pub fn sign(self) -> f64 {
        if self.is_upper() {
            1.0
        } else {
            -1.0
        }
    }
}

/// `1{x|_k in box} (x_{k+1} - x_k)` for one adjacent box at level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTest {
    pub level: usize,
    pub adjacent: AdjacentBox,
}

impl MartingaleTest {
    /// Whether the indicator is one on `cell` (it is constant per cell).
    pub fn active_on(&self, cell_index: &[usize]) -> bool {
        cell_index[..self.level] == self.adjacent.index[..]
    }

    pub fn affine_on(&self, cell_index: &[usize], n: usize) -> Affine {
        let mut a = Affine::zero(n);
        if self.active_on(cell_index) {
            a.gradient[self.level] = 1.0;
            a.gradient[self.level - 1] = -1.0;
        }
        a
    }

    pub fn function(&self, grid: &Arc<Grid>) -> PiecewiseLinearFunction {
        let n = grid.n_times();
        PiecewiseLinearFunction::from_cells(grid, |c| Ok(self.affine_on(&c.index, n)))
            .expect("martingale tests are affine on every cell")
    }

    /// Value at a point owned by `cell_index`.
    pub fn eval(&self, cell_index: &[usize], x: &[f64]) -> f64 {
        if self.active_on(cell_index) {
            x[self.level] - x[self.level - 1]
        } else {
            0.0
        }
    }

    pub fn name(&self) -> alloc::string::String {
        format!("mart_{}_{}", self.level, self.adjacent.linear + 1)
    }
}

/// All martingale tests, level by level; empty for a single date.
pub fn martingale_tests(grid: &Grid) -> Vec<MartingaleTest> {
    let n = grid.n_times();
    let mut out = Vec::new();
    for k in 1..n {
        for b in grid.adjacent_boxes_upto(k).expect("level in range") {
            out.push(MartingaleTest { level: k, adjacent: b });
        }
    }
    out
}

/// Feasibility program in `lambda` for "`<u, x> + beta >= 0` on the polytope
/// `{<f_j, x> >= l_j}`". Its rows are named `c1_i` and `c2`.
pub fn farkas_encode(faces: &[HalfSpace], affine: &Affine) -> LinearProgram {
    let n = affine.dim();
    let mut lp = LinearProgram::new(Sense::Minimize);
    for i in 0..n {
        lp.add_row(format!("c1_{i}"), Relation::Equal, affine.gradient[i]);
    }
    lp.add_row("c2".to_string(), Relation::GreaterEq, -affine.offset);
    for (j, h) in faces.iter().enumerate() {
        let v = lp.add_var(format!("lam_{}", j + 1), 0.0, 0.0, f64::INFINITY);
        for i in 0..n {
            lp.add_coef(i, v, h.normal[i]);
        }
        lp.add_coef(n, v, h.bound);
    }
    lp
}

/// Faces of a region: the cell's box faces followed by its cuts.
pub fn region_faces(cell: &Cell, cuts: &[HalfSpace]) -> Vec<HalfSpace> {
    let mut f = cell.inequalities();
    f.extend(cuts.iter().cloned());
    f
}

/// One side of an extra quote: its price and the payoff used on that side.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraLeg {
    pub extra: usize,
    pub price: f64,
    pub payoff: PiecewiseLinearFunction,
}

/// Piecewise-linear payoffs for the ask and bid sides of each extra quote.
/// The ask side of a bracketed approximation uses the under-estimate and
/// the bid side the over-estimate, so the relaxed constraints stay implied by
/// the true ones.
pub fn extra_legs(snapshot: &MarketSnapshot, grid: &Arc<Grid>) -> Result<(Vec<ExtraLeg>, Vec<ExtraLeg>)> {
    let mut asks = Vec::new();
    let mut bids = Vec::new();
    for (e, q) in snapshot.extras().iter().enumerate() {
        let mode = q.approximation;
        if !q.payoff.is_piecewise_linear() && mode.is_none() {
            return Err(Error::ApproximationRequired(q.payoff.name().to_string()));
        }
        if q.has_ask() {
            let fit = mode.map(|m| m.fit(false));
            asks.push(ExtraLeg { extra: e, price: q.ask, payoff: q.payoff.to_pwl(grid, fit)? });
        }
        if q.has_bid() {
            let fit = mode.map(|m| m.fit(true));
            bids.push(ExtraLeg { extra: e, price: q.bid, payoff: q.payoff.to_pwl(grid, fit)? });
        }
    }
    Ok((asks, bids))
}

/// A cell or a piece of a cell: the unit carrying one Farkas block.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub cell: usize,
    pub cuts: Vec<HalfSpace>,
    /// Payoff on the region (already negated for a lower bound).
    pub payoff: Affine,
    /// Affine data of the ask legs, then the bid legs.
    pub legs: Vec<Affine>,
    /// First Farkas variable of the region.
    pub lambda_start: usize,
    pub lambda_len: usize,
}

/// Positions of the variable blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLayout {
    pub yask: usize,
    pub ybid: usize,
    pub n_quotes: usize,
    pub zask: usize,
    pub zbid: usize,
    pub ask_legs: Vec<usize>,
    pub bid_legs: Vec<usize>,
    pub mart: usize,
    pub n_mart: usize,
    pub w: usize,
    pub lambda: usize,
}

#[derive(Debug, Clone)]
pub struct DualProblem {
    pub lp: LinearProgram,
    pub side: BoundSide,
    pub layout: DualLayout,
    pub regions: Vec<Region>,
    pub tests: Vec<MartingaleTest>,
    pub grid: Arc<Grid>,
}

impl DualProblem {
    /// Bound implied by an optimal objective value.
    pub fn bound(&self, optimum: f64) -> f64 {
        self.side.sign() * optimum
    }
}

/// Names `yask_i_j`/`ybid_i_j` use the date and the strike's rank among the
/// quotes of that date, both 1-based.
pub(crate) fn quote_labels(snapshot: &MarketSnapshot) -> Vec<(usize, usize)> {
    let mut seen = vec![0usize; snapshot.n_times() + 1];
    snapshot
        .quotes()
        .iter()
        .map(|q| {
            seen[q.time_index] += 1;
            (q.time_index, seen[q.time_index])
        })
        .collect()
}

/// Call payoff `(x_t - K)^+` restricted to a cell whose kink set contains
/// `K`: active when the cell lies above the strike.
pub(crate) fn call_affine_on(cell: &Cell, time: usize, strike: f64) -> Option<(usize, f64)> {
    let mid = 0.5 * (cell.lo[time] + cell.hi[time]);
    (mid > strike).then_some((time, -strike))
}

/// Assembles the hedge program for `payoff` on `grid`.
pub fn build_dual(
    snapshot: &MarketSnapshot,
    grid: &Arc<Grid>,
    payoff: &PiecewiseLinearFunction,
    side: BoundSide,
) -> Result<DualProblem> {
    let n = grid.n_times();
    if snapshot.n_times() != n || payoff.dim() != n {
        return Err(Error::GridMismatch);
    }
    for q in snapshot.quotes() {
        let i = q.time_index - 1;
        if !grid.is_grid_point(i, q.strike) {
            return Err(Error::OffGrid { what: "strike", value: q.strike, time_index: q.time_index });
        }
    }
    if payoff.grid().as_ref() != grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    let (asks, bids) = extra_legs(snapshot, grid)?;
    let tests = martingale_tests(grid);
    let sign = side.sign();

    // regions: common refinement of the payoff and the extra legs
    let mut functions: Vec<&PiecewiseLinearFunction> = vec![payoff];
    functions.extend(asks.iter().map(|l| &l.payoff));
    functions.extend(bids.iter().map(|l| &l.payoff));
    let mut regions = Vec::new();
    for cell in 0..grid.cell_count() {
        for r in overlay_functions(grid, cell, &functions) {
            let mut affines = r.affines.into_iter();
            let payoff = affines.next().unwrap().scaled(sign);
            regions.push(Region {
                cell,
                cuts: r.cuts,
                payoff,
                legs: affines.collect(),
                lambda_start: 0,
                lambda_len: 0,
            });
        }
    }

    let mut lp = LinearProgram::new(Sense::Minimize);
    for (r, region) in regions.iter().enumerate() {
        for i in 0..n {
            lp.add_row(format!("c1_{}_{}", r + 1, i + 1), Relation::Equal, region.payoff.gradient[i]);
        }
        lp.add_row(format!("c2_{}", r + 1), Relation::GreaterEq, region.payoff.offset);
    }
    let row = |r: usize, i: usize| r * (n + 1) + i;
    let cells: Vec<Cell> = grid.cells().collect();

    let labels = quote_labels(snapshot);
    let quotes = snapshot.quotes();
    let add_quotes = |lp: &mut LinearProgram, ask: bool| {
        let start = lp.n_vars();
        lp.begin_block(if ask { "yask" } else { "ybid" });
        for (q, &(t, j)) in quotes.iter().zip(&labels) {
            let (name, cost, s) = if ask {
                (format!("yask_{t}_{j}"), q.ask, 1.0)
            } else {
                (format!("ybid_{t}_{j}"), -q.bid, -1.0)
            };
            let v = lp.add_var(name, cost, 0.0, f64::INFINITY);
            for (r, region) in regions.iter().enumerate() {
                if let Some((i, off)) = call_affine_on(&cells[region.cell], t - 1, q.strike) {
                    lp.add_coef(row(r, i), v, s);
                    lp.add_coef(row(r, n), v, s * off);
                }
            }
        }
        lp.end_block();
        start
    };
    let yask = add_quotes(&mut lp, true);
    let ybid = add_quotes(&mut lp, false);

    let add_legs = |lp: &mut LinearProgram, legs: &[ExtraLeg], offset: usize, ask: bool| {
        let start = lp.n_vars();
        lp.begin_block(if ask { "zask" } else { "zbid" });
        for (k, leg) in legs.iter().enumerate() {
            let (name, cost, s) = if ask {
                (format!("zask_{}", leg.extra + 1), leg.price, 1.0)
            } else {
                (format!("zbid_{}", leg.extra + 1), -leg.price, -1.0)
            };
            let v = lp.add_var(name, cost, 0.0, f64::INFINITY);
            for (r, region) in regions.iter().enumerate() {
                let a = &region.legs[offset + k];
                for i in 0..n {
                    lp.add_coef(row(r, i), v, s * a.gradient[i]);
                }
                lp.add_coef(row(r, n), v, s * a.offset);
            }
        }
        lp.end_block();
        start
    };
    let zask = add_legs(&mut lp, &asks, 0, true);
    let zbid = add_legs(&mut lp, &bids, asks.len(), false);

    let mart = lp.n_vars();
    lp.begin_block("mart");
    for t in &tests {
        let v = lp.add_var(t.name(), 0.0, f64::NEG_INFINITY, f64::INFINITY);
        for (r, region) in regions.iter().enumerate() {
            if t.active_on(&cells[region.cell].index) {
                lp.add_coef(row(r, t.level - 1), v, -1.0);
                lp.add_coef(row(r, t.level), v, 1.0);
            }
        }
    }
    lp.end_block();

    lp.begin_block("w");
    let w = lp.add_var("w".to_string(), 1.0, f64::NEG_INFINITY, f64::INFINITY);
    for r in 0..regions.len() {
        lp.add_coef(row(r, n), w, 1.0);
    }
    lp.end_block();

    let lambda = lp.n_vars();
    lp.begin_block("lam");
    for (r, region) in regions.iter_mut().enumerate() {
        region.lambda_start = lp.n_vars();
        let faces = region_faces(&cells[region.cell], &region.cuts);
        region.lambda_len = faces.len();
        for (j, f) in faces.iter().enumerate() {
            let v = lp.add_var(format!("lam_{}_{}", r + 1, j + 1), 0.0, 0.0, f64::INFINITY);
            for i in 0..n {
                lp.add_coef(row(r, i), v, -f.normal[i]);
            }
            lp.add_coef(row(r, n), v, f.bound);
        }
    }
    lp.end_block();

    Ok(DualProblem {
        lp,
        side,
        layout: DualLayout {
            yask,
            ybid,
            n_quotes: quotes.len(),
            zask,
            zbid,
            ask_legs: asks.iter().map(|l| l.extra).collect(),
            bid_legs: bids.iter().map(|l| l.extra).collect(),
            mart,
            n_mart: tests.len(),
            w,
            lambda,
        },
        regions,
        tests,
        grid: grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::LpStatus;
    use crate::market::VanillaQuote;
    use crate::payoff::PayoffSpec;
    use crate::simplex::{solve, SolverOptions};

    fn unit_cell() -> Cell {
        Cell { index: vec![0], lo: vec![0.0], hi: vec![1.0] }
    }

    fn feasible(affine: Affine) -> bool {
        let lp = farkas_encode(&unit_cell().inequalities(), &affine);
        solve(&lp, &SolverOptions::default()).unwrap().status == LpStatus::Optimal
    }

    #[test]
    fn farkas_examples() {
        assert!(feasible(Affine::new(vec![1.0], 0.0)));
        let lp = farkas_encode(&unit_cell().inequalities(), &Affine::new(vec![1.0], 0.0));
        let s = solve(&lp, &SolverOptions::default()).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert!(feasible(Affine::new(vec![-1.0], 1.0)));
        let lp = farkas_encode(&unit_cell().inequalities(), &Affine::new(vec![-1.0], 1.0));
        assert_eq!(solve(&lp, &SolverOptions::default()).unwrap().x, vec![0.0, 1.0]);
        assert!(!feasible(Affine::new(vec![1.0], -2.0)));
    }

    #[test]
    fn martingale_test_counts() {
        let g = Grid::new(vec![vec![0.0, 50.0, 100.0]; 2]).unwrap();
        assert_eq!(martingale_tests(&g).len(), 2);
        let g = Grid::new(vec![vec![0.0, 50.0, 100.0]; 3]).unwrap();
        let tests = martingale_tests(&g);
        assert_eq!(tests.len(), 6);
        let c = g.cell(&[0, 1, 0]);
        assert_eq!(tests[0].eval(&c.index, &[0.0, 70.0, 10.0]), 70.0);
        assert!(martingale_tests(&Grid::new(vec![vec![0.0, 1.0]]).unwrap()).is_empty());
    }

    #[test]
    fn size_formula() {
        let snap = MarketSnapshot::new(
            2,
            vec![
                VanillaQuote::new(1, 40.0, 11.0, 11.5),
                VanillaQuote::new(1, 60.0, 2.0, 2.5),
                VanillaQuote::new(2, 50.0, 6.0, 7.0),
            ],
            vec![],
            0.0,
            100.0,
        )
        .unwrap();
        let grid = Arc::new(Grid::build(&snap, &[]).unwrap());
        let h = PayoffSpec::Call { time_index: 2, strike: 50.0 }.to_pwl(&grid, None).unwrap();
        let d = build_dual(&snap, &grid, &h, BoundSide::Upper).unwrap();
        let cells = grid.cell_count();
        assert_eq!(cells, 3 * 2);
        let m1 = grid.box_count(1);
        assert_eq!(d.lp.n_vars(), 2 * 3 + m1 + 1 + cells * 4);
        assert_eq!(d.lp.n_rows(), cells * 3);
        assert_eq!(d.lp.var_names[0], "yask_1_1");
        assert_eq!(d.lp.var_names[d.layout.w], "w");
    }

    #[test]
    fn constant_payoff_without_quotes_binding() {
        let snap = MarketSnapshot::new(1, vec![VanillaQuote::new(1, 50.0, 0.0, 100.0)], vec![], 0.0, 100.0).unwrap();
        let grid = Arc::new(Grid::build(&snap, &[]).unwrap());
        let h = PiecewiseLinearFunction::constant(&grid, 1.0);
        let d = build_dual(&snap, &grid, &h, BoundSide::Upper).unwrap();
        let s = solve(&d.lp, &SolverOptions::default()).unwrap();
        assert!((d.bound(s.objective) - 1.0).abs() < 1e-12);
    }
}
