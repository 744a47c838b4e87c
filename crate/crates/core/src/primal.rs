//! Measure-side linear program over atoms at region vertices.
//!
//! An atom is a vertex of a region (a cell or a piece of one) tagged with
//! that region, so functions that jump across faces are evaluated with the
//! region's own affine data. This is the exact linear-programming dual of
//! the Farkas hedge program and serves as an independent oracle for it.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dual::{extra_legs, BoundSide};
use crate::grid::{Cell, Grid};
use crate::lp::{LinearProgram, LpSolution, LpStatus, Relation, Sense};
use crate::market::MarketSnapshot;
use crate::pwl::{overlay_functions, piece_vertices, tolerance, Affine, HalfSpace, PiecewiseLinearFunction};
use crate::simplex::{ColumnSource, GeneratedColumn, PricingRequest};
use crate::{Error, Result};

pub const DEFAULT_ATOM_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Atom {
    pub x: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "w"))]
    pub weight: f64,
    /// Multi-index of the cell the atom is attached to.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub cell: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `sum_a w_a f(a)`.
    pub fn expectation<F: Fn(&Atom) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(a)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub max_residual: f64,
    pub passed: bool,
}

/// Largest `|E[1{x|_k in box}(x_{k+1} - x_k)]|` over all adjacent boxes.
/// Atoms without a cell tag are attached to the cell owning their point.
pub fn check_martingale(measure: &AtomicMeasure, grid: &Grid, tol: f64) -> MartingaleReport {
    let n = grid.n_times();
    let mut worst: f64 = 0.0;
    for k in 1..n {
        let mut sums = vec![0.0; grid.box_count(k)];
        for a in &measure.atoms {
            let cell = match &a.cell {
                Some(c) => c.clone(),
                None => match grid.locate(&a.x) {
                    Some(c) => c,
                    None => continue,
                },
            };
            sums[grid.box_linear_index(&cell, k)] += a.weight * (a.x[k] - a.x[k - 1]);
        }
        worst = sums.iter().fold(worst, |m, s| m.max(s.abs()));
    }
    MartingaleReport { max_residual: worst, passed: worst <= tol }
}

/// Row layout of the measure program.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalRows {
    /// Per quote: `(ask row, bid row)`; equal when bid = ask (one equality).
    pub quotes: Vec<(usize, usize)>,
    pub ask_legs: Vec<usize>,
    pub bid_legs: Vec<usize>,
    /// Martingale rows by level, then box.
    pub mart: Vec<Vec<usize>>,
    pub normalization: usize,
}

/// Region of the measure program with its atoms' candidate vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomRegion {
    pub cell: Vec<usize>,
    pub cuts: Vec<HalfSpace>,
    pub payoff: Affine,
    pub ask_legs: Vec<Affine>,
    pub bid_legs: Vec<Affine>,
    pub vertices: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PrimalProblem {
    pub lp: LinearProgram,
    pub side: BoundSide,
    pub rows: PrimalRows,
    /// `(region, vertex)` per column.
    pub atoms: Vec<(usize, usize)>,
    pub regions: Vec<AtomRegion>,
}

/// Shared structure of the explicit measure program and its
/// column-generation form.
struct Skeleton {
    master: LinearProgram,
    rows: PrimalRows,
    regions: Vec<AtomRegion>,
    strikes: Vec<(usize, f64)>,
}

fn skeleton(
    snapshot: &MarketSnapshot,
    grid: &Arc<Grid>,
    payoff: &PiecewiseLinearFunction,
    side: BoundSide,
    cap: usize,
) -> Result<Skeleton> {
    let n = grid.n_times();
    if snapshot.n_times() != n || payoff.grid().as_ref() != grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    for q in snapshot.quotes() {
        if !grid.is_grid_point(q.time_index - 1, q.strike) {
            return Err(Error::OffGrid { what: "strike", value: q.strike, time_index: q.time_index });
        }
    }
    let (asks, bids) = extra_legs(snapshot, grid)?;
    let mut functions: Vec<&PiecewiseLinearFunction> = vec![payoff];
    functions.extend(asks.iter().map(|l| &l.payoff));
    functions.extend(bids.iter().map(|l| &l.payoff));

    let tol = tolerance(grid);
    let mut regions = Vec::new();
    let mut atoms = 0usize;
    for linear in 0..grid.cell_count() {
        let index = grid.cell_multi_index(linear);
        let cell: Cell = grid.cell(&index);
        for r in overlay_functions(grid, linear, &functions) {
            let vertices = piece_vertices(&cell, &r.cuts, tol);
            atoms += vertices.len();
            if atoms > cap {
                return Err(Error::TooManyAtoms { atoms, cap });
            }
            let mut it = r.affines.into_iter();
            let payoff = it.next().unwrap();
            let ask_legs: Vec<Affine> = it.by_ref().take(asks.len()).collect();
            let bid_legs: Vec<Affine> = it.collect();
            regions.push(AtomRegion { cell: index.clone(), cuts: r.cuts, payoff, ask_legs, bid_legs, vertices });
        }
    }

    let sense = if side.is_upper() { Sense::Maximize } else { Sense::Minimize };
    let mut lp = LinearProgram::new(sense);
    let mut seen = vec![0usize; n + 1];
    let mut quotes = Vec::new();
    for q in snapshot.quotes() {
        seen[q.time_index] += 1;
        let tag = format!("{}_{}", q.time_index, seen[q.time_index]);
        if q.bid == q.ask {
            let r = lp.add_row(format!("q_{tag}"), Relation::Equal, q.ask);
            quotes.push((r, r));
        } else {
            let a = lp.add_row(format!("qask_{tag}"), Relation::LessEq, q.ask);
            let b = lp.add_row(format!("qbid_{tag}"), Relation::GreaterEq, q.bid);
            quotes.push((a, b));
        }
    }
    let ask_legs = asks
        .iter()
        .map(|l| lp.add_row(format!("eask_{}", l.extra + 1), Relation::LessEq, l.price))
        .collect();
    let bid_legs = bids
        .iter()
        .map(|l| lp.add_row(format!("ebid_{}", l.extra + 1), Relation::GreaterEq, l.price))
        .collect();
    let mut mart = Vec::new();
    for k in 1..n {
        mart.push(
            (0..grid.box_count(k))
                .map(|b| lp.add_row(format!("m_{k}_{}", b + 1), Relation::Equal, 0.0))
                .collect(),
        );
    }
    let normalization = lp.add_row("norm".to_string(), Relation::Equal, 1.0);
    let strikes = snapshot.quotes().iter().map(|q| (q.time_index - 1, q.strike)).collect();
    Ok(Skeleton {
        master: lp,
        rows: PrimalRows { quotes, ask_legs, bid_legs, mart, normalization },
        regions,
        strikes,
    })
}

impl Skeleton {
    /// Objective coefficient and sorted column of the atom at `v` in `region`.
    fn column(&self, grid: &Grid, region: &AtomRegion, v: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let mut col = Vec::new();
        for (&(t, k), &(ra, rb)) in self.strikes.iter().zip(&self.rows.quotes) {
            let value = (v[t] - k).max(0.0);
            if value != 0.0 {
                col.push((ra, value));
                if rb != ra {
                    col.push((rb, value));
                }
            }
        }
        for (a, &r) in region.ask_legs.iter().zip(&self.rows.ask_legs) {
            col.push((r, a.eval(v)));
        }
        for (a, &r) in region.bid_legs.iter().zip(&self.rows.bid_legs) {
            col.push((r, a.eval(v)));
        }
        for (k, rows) in self.rows.mart.iter().enumerate() {
            let level = k + 1;
            let b = grid.box_linear_index(&region.cell, level);
            col.push((rows[b], v[level] - v[level - 1]));
        }
        col.push((self.rows.normalization, 1.0));
        col.retain(|e| e.1 != 0.0);
        col.sort_by_key(|e| e.0);
        (region.payoff.eval(v), col)
    }
}

/// Measure program with every atom materialized.
pub fn build_primal(
    snapshot: &MarketSnapshot,
    grid: &Arc<Grid>,
    payoff: &PiecewiseLinearFunction,
    side: BoundSide,
) -> Result<PrimalProblem> {
    build_primal_capped(snapshot, grid, payoff, side, DEFAULT_ATOM_CAP)
}

pub fn build_primal_capped(
    snapshot: &MarketSnapshot,
    grid: &Arc<Grid>,
    payoff: &PiecewiseLinearFunction,
    side: BoundSide,
    cap: usize,
) -> Result<PrimalProblem> {
    let sk = skeleton(snapshot, grid, payoff, side, cap)?;
    let mut lp = sk.master.clone();
    let mut atoms = Vec::new();
    lp.begin_block("atom");
    for (r, region) in sk.regions.iter().enumerate() {
        for (k, v) in region.vertices.iter().enumerate() {
            let (cost, col) = sk.column(grid, region, v);
            let j = lp.add_var(format!("atom_{}_{}", r + 1, k + 1), cost, 0.0, f64::INFINITY);
            lp.columns[j] = col;
            atoms.push((r, k));
        }
    }
    lp.end_block();
    Ok(PrimalProblem { lp, side, rows: sk.rows, atoms, regions: sk.regions })
}

/// Atoms with weight above `1e-12` of an optimal measure program.
pub fn extract_measure(problem: &PrimalProblem, solution: &LpSolution) -> Result<AtomicMeasure> {
    extract_from(&problem.regions, &problem.atoms, solution)
}

fn extract_from(regions: &[AtomRegion], atoms: &[(usize, usize)], solution: &LpSolution) -> Result<AtomicMeasure> {
    if solution.status != LpStatus::Optimal {
        return Err(Error::NoMeasure(solution.status));
    }
    let atoms = atoms
        .iter()
        .zip(&solution.x)
        .filter(|(_, &w)| w > 1e-12)
        .map(|(&(r, k), &w)| Atom {
            x: regions[r].vertices[k].clone(),
            weight: w,
            cell: Some(regions[r].cell.clone()),
        })
        .collect();
    Ok(AtomicMeasure { atoms })
}

/// The measure program with atoms generated on demand: each pricing round
/// minimizes the reduced cost over the vertices of every region in closed
/// form, so the full atom set is never built.
pub struct AtomColumnSource {
    grid: Arc<Grid>,
    sk: Skeleton,
    added: BTreeSet<(usize, usize)>,
    atoms: Vec<(usize, usize)>,
    batch: usize,
    total: usize,
}

impl AtomColumnSource {
    pub fn new(
        snapshot: &MarketSnapshot,
        grid: &Arc<Grid>,
        payoff: &PiecewiseLinearFunction,
        side: BoundSide,
    ) -> Result<Self> {
        let sk = skeleton(snapshot, grid, payoff, side, usize::MAX)?;
        let total = sk.regions.iter().map(|r| r.vertices.len()).sum();
        let batch = (sk.master.n_rows() / 2).max(50);
        Ok(Self { grid: grid.clone(), sk, added: BTreeSet::new(), atoms: Vec::new(), batch, total })
    }

    pub fn rows(&self) -> &PrimalRows {
        &self.sk.rows
    }

    pub fn regions(&self) -> &[AtomRegion] {
        &self.sk.regions
    }

    /// `(region, vertex)` of each generated column, in order.
    pub fn atoms(&self) -> &[(usize, usize)] {
        &self.atoms
    }

    pub fn measure(&self, solution: &LpSolution) -> Result<AtomicMeasure> {
        extract_from(&self.sk.regions, &self.atoms, solution)
    }

    pub fn master_rows(&self) -> usize {
        self.sk.master.n_rows()
    }

    /// Affine reduced cost on `region` for the given duals.
    fn reduced_affine(&self, region: &AtomRegion, req: &PricingRequest, call_slopes: &[Vec<(f64, f64)>]) -> Affine {
        let grid = &self.grid;
        let n = grid.n_times();
        let rows = &self.sk.rows;
        let y = req.duals;
        let mut g = region.payoff.scaled(req.cost_weight * req.sense_sign);
        for t in 0..n {
            let (slope, offset) = call_slopes[t][region.cell[t]];
            g.gradient[t] -= slope;
            g.offset -= offset;
        }
        for (a, &r) in region.ask_legs.iter().zip(&rows.ask_legs) {
            g.add_scaled(-y[r], a);
        }
        for (a, &r) in region.bid_legs.iter().zip(&rows.bid_legs) {
            g.add_scaled(-y[r], a);
        }
        for (k, mrows) in rows.mart.iter().enumerate() {
            let level = k + 1;
            let pi = y[mrows[grid.box_linear_index(&region.cell, level)]];
            g.gradient[level] -= pi;
            g.gradient[level - 1] += pi;
        }
        g.offset -= y[rows.normalization];
        g
    }

    /// Per date and interval: slope and offset of `sum_q y_q (x_t - K_q)^+`.
    fn call_slopes(&self, y: &[f64]) -> Vec<Vec<(f64, f64)>> {
        let grid = &self.grid;
        (0..grid.n_times())
            .map(|t| {
                let pts = grid.points(t);
                (0..pts.len() - 1)
                    .map(|j| {
                        let mid = 0.5 * (pts[j] + pts[j + 1]);
                        let mut acc = (0.0, 0.0);
                        for (&(qt, k), &(ra, rb)) in self.sk.strikes.iter().zip(&self.sk.rows.quotes) {
                            if qt == t && k < mid {
                                let pi = if ra == rb { y[ra] } else { y[ra] + y[rb] };
                                acc.0 += pi;
                                acc.1 -= pi * k;
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }
}

impl ColumnSource for AtomColumnSource {
    fn master(&self) -> LinearProgram {
        self.sk.master.clone()
    }

    fn price(&mut self, req: &PricingRequest) -> Vec<GeneratedColumn> {
        let slopes = self.call_slopes(req.duals);
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (r, region) in self.sk.regions.iter().enumerate() {
            let g = self.reduced_affine(region, req, &slopes);
            let (k, d) = if region.cuts.is_empty() {
                // box: pick each coordinate's bound independently
                let cell = self.grid.cell(&region.cell);
                let mut mask = 0usize;
                let mut d = g.offset;
                for i in 0..cell.dim() {
                    let (lo, hi) = (g.gradient[i] * cell.lo[i], g.gradient[i] * cell.hi[i]);
                    if hi < lo {
                        mask |= 1 << i;
                        d += hi;
                    } else {
                        d += lo;
                    }
                }
                (mask, d)
            } else {
                region
                    .vertices
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (k, g.eval(v)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
            };
            if d < -1e-9 && !self.added.contains(&(r, k)) {
                candidates.push((d, r, k));
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.truncate(self.batch);
        candidates
            .into_iter()
            .map(|(_, r, k)| {
                self.added.insert((r, k));
                self.atoms.push((r, k));
                let region = &self.sk.regions[r];
                let (cost, coeffs) = self.sk.column(&self.grid, region, &region.vertices[k]);
                GeneratedColumn {
                    name: format!("atom_{}_{}", r + 1, k + 1),
                    cost,
                    lower: 0.0,
                    upper: f64::INFINITY,
                    coeffs,
                }
            })
            .collect()
    }

    fn total_columns(&self) -> usize {
        self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::VanillaQuote;
    use crate::payoff::PayoffSpec;
    use crate::simplex::{solve, solve_column_generation, SolverOptions};

    #[test]
    fn pinned_call() {
        let snap = MarketSnapshot::new(1, vec![VanillaQuote::new(1, 50.0, 4.2235, 4.2235)], vec![], 0.0, 100.0).unwrap();
        let grid = Arc::new(Grid::build(&snap, &[]).unwrap());
        let h = PayoffSpec::Call { time_index: 1, strike: 50.0 }.to_pwl(&grid, None).unwrap();
        for side in [BoundSide::Upper, BoundSide::Lower] {
            let p = build_primal(&snap, &grid, &h, side).unwrap();
            let s = solve(&p.lp, &SolverOptions::default()).unwrap();
            assert!((s.objective - 4.2235).abs() < 1e-9);
            let m = extract_measure(&p, &s).unwrap();
            assert!((m.total_weight() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn digital_without_binding_quotes() {
        let snap = MarketSnapshot::new(
            2,
            vec![VanillaQuote::new(1, 50.0, 0.0, 100.0), VanillaQuote::new(2, 50.0, 0.0, 100.0)],
            vec![],
            0.0,
            100.0,
        )
        .unwrap();
        let spec = PayoffSpec::BarrierDigital { lower: 34.0, upper: 56.0 };
        let grid = Arc::new(Grid::build(&snap, &spec.grid_levels(2)).unwrap());
        let h = spec.to_pwl(&grid, None).unwrap();
        let up = build_primal(&snap, &grid, &h, BoundSide::Upper).unwrap();
        let lo = build_primal(&snap, &grid, &h, BoundSide::Lower).unwrap();
        let su = solve(&up.lp, &SolverOptions::default()).unwrap();
        let sl = solve(&lo.lp, &SolverOptions::default()).unwrap();
        assert!((su.objective - 1.0).abs() < 1e-9);
        assert!(sl.objective.abs() < 1e-9);
        let m = extract_measure(&up, &su).unwrap();
        assert!(check_martingale(&m, &grid, 1e-8).passed);

        let mut src = AtomColumnSource::new(&snap, &grid, &h, BoundSide::Upper).unwrap();
        let cg = solve_column_generation(&mut src, &SolverOptions::default()).unwrap();
        assert!((cg.objective - 1.0).abs() < 1e-9);
        assert!(cg.columns_materialized < src.total_columns());
    }

    #[test]
    fn martingale_check_examples() {
        let g = Grid::new(vec![vec![0.0, 40.0, 50.0, 60.0, 100.0]; 2]).unwrap();
        let atom = |x: [f64; 2], w: f64| Atom { x: x.to_vec(), weight: w, cell: None };
        let m = AtomicMeasure { atoms: vec![atom([50.0, 50.0], 1.0)] };
        assert_eq!(check_martingale(&m, &g, 1e-6).max_residual, 0.0);
        let m = AtomicMeasure { atoms: vec![atom([50.0, 60.0], 0.5), atom([50.0, 40.0], 0.5)] };
        assert_eq!(check_martingale(&m, &g, 1e-6).max_residual, 0.0);
        let m = AtomicMeasure { atoms: vec![atom([50.0, 60.0], 1.0)] };
        let r = check_martingale(&m, &g, 1e-6);
        assert_eq!(r.max_residual, 10.0);
        assert!(!r.passed);
    }

    #[test]
    fn atom_cap() {
        let snap = MarketSnapshot::new(2, vec![VanillaQuote::new(1, 50.0, 4.0, 5.0), VanillaQuote::new(2, 50.0, 5.0, 6.0)], vec![], 0.0, 100.0).unwrap();
        let grid = Arc::new(Grid::build(&snap, &[]).unwrap());
        let h = PiecewiseLinearFunction::constant(&grid, 1.0);
        assert_eq!(
            build_primal_capped(&snap, &grid, &h, BoundSide::Upper, 10).unwrap_err(),
            Error::TooManyAtoms { atoms: 12, cap: 10 }
        );
    }
}
