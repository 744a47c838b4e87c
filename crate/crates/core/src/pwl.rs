//! Piecewise-affine functions over a grid partition.
//!
//! Each grid cell carries one or more pieces. A piece is the cell intersected
//! with extra half-spaces ("cuts") together with an affine function; cells
//! without cuts carry exactly one piece. Cuts come from the pointwise max/min
//! closure, which splits a cell along the hyperplane where two affine pieces
//! cross.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{Cell, Grid};
use crate::{Error, Result};

/// `<normal, x> >= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub bound: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, bound: f64) -> Self {
        Self { normal, bound }
    }

    /// `sign * x_i >= bound` in dimension `n`.
    pub fn axis(n: usize, i: usize, sign: f64, bound: f64) -> Self {
        let mut normal = vec![0.0; n];
        normal[i] = sign;
        Self { normal, bound }
    }

    /// `a(x) >= 0` for an affine `a`.
    pub fn from_affine(a: &Affine) -> Self {
        Self {
            normal: a.gradient.clone(),
            bound: -a.offset,
        }
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub gradient: Vec<f64>,
    pub offset: f64,
}

impl Affine {
    pub fn new(gradient: Vec<f64>, offset: f64) -> Self {
        Self { gradient, offset }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self {
            gradient: vec![0.0; n],
            offset: c,
        }
    }

    /// `x_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut gradient = vec![0.0; n];
        gradient[i] = 1.0;
        Self {
            gradient,
            offset: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.gradient, x) + self.offset
    }

    pub fn is_zero(&self) -> bool {
        self.offset == 0.0 && self.gradient.iter().all(|&g| g == 0.0)
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &Affine) {
        for (g, o) in self.gradient.iter_mut().zip(&other.gradient) {
            *g += factor * o;
        }
        self.offset += factor * other.offset;
    }

    pub fn scaled(&self, factor: f64) -> Affine {
        Affine {
            gradient: self.gradient.iter().map(|g| g * factor).collect(),
            offset: self.offset * factor,
        }
    }

    pub fn plus(&self, other: &Affine) -> Affine {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }

    pub fn minus(&self, other: &Affine) -> Affine {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    /// Magnitude used to scale comparison tolerances over a box of
    /// coordinate size `scale`.
    fn magnitude(&self, scale: f64) -> f64 {
        self.offset.abs() + self.gradient.iter().map(|g| g.abs()).sum::<f64>() * scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub cuts: Vec<HalfSpace>,
    pub affine: Affine,
}

impl Piece {
    pub fn whole(affine: Affine) -> Self {
        Self {
            cuts: Vec::new(),
            affine,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFunction {
    grid: Arc<Grid>,
    cells: Vec<Vec<Piece>>,
    continuous: bool,
}

impl PiecewiseLinearFunction {
    /// One affine record per cell.
    pub fn from_cells<F>(grid: &Arc<Grid>, mut f: F) -> Result<Self>
    where
        F: FnMut(&Cell) -> Result<Affine>,
    {
        let cells = grid
            .cells()
            .map(|c| f(&c).map(|a| vec![Piece::whole(a)]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            cells,
            continuous: false,
        })
    }

    /// Explicit pieces, indexed by linear cell index.
    pub fn from_pieces(grid: &Arc<Grid>, cells: Vec<Vec<Piece>>) -> Result<Self> {
        let n = grid.n_times();
        if cells.len() != grid.cell_count() {
            return Err(Error::InvalidInput(alloc::format!(
                "expected {} cells, got {}",
                grid.cell_count(),
                cells.len()
            )));
        }
        for (linear, pieces) in cells.iter().enumerate() {
            let ok = !pieces.is_empty()
                && pieces.iter().all(|p| {
                    p.affine.dim() == n && p.cuts.iter().all(|h| h.normal.len() == n)
                });
            if !ok {
                return Err(Error::NotAffine {
                    cell: grid.cell_multi_index(linear),
                });
            }
        }
        Ok(Self {
            grid: grid.clone(),
            cells,
            continuous: false,
        })
    }

    pub fn affine(grid: &Arc<Grid>, a: Affine) -> Self {
        Self {
            grid: grid.clone(),
            cells: vec![vec![Piece::whole(a)]; grid.cell_count()],
            continuous: true,
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self::affine(grid, Affine::constant(grid.n_times(), c))
    }

    /// `x_i` (0-based date).
    pub fn coordinate(grid: &Arc<Grid>, i: usize) -> Self {
        Self::affine(grid, Affine::coordinate(grid.n_times(), i))
    }

    /// Marks the function as continuous, which enables the shared-vertex
    /// check in [`Self::continuity_defect`] callers rely on.
    pub fn declared_continuous(mut self, continuous: bool) -> Self {
        self.continuous = continuous;
        self
    }

    pub fn is_declared_continuous(&self) -> bool {
        self.continuous
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.n_times()
    }

    pub fn pieces(&self, cell_linear: usize) -> &[Piece] {
        &self.cells[cell_linear]
    }

    pub fn piece_count(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn has_cuts(&self) -> bool {
        self.cells.iter().flatten().any(|p| !p.cuts.is_empty())
    }

    /// Value of the owning piece at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let index = self.grid.locate(x).ok_or(Error::OutsideDomain)?;
        let cell = self.grid.cell_linear_index(&index);
        Ok(owning_piece(&self.cells[cell], x, self.tol()).affine.eval(x))
    }

    fn tol(&self) -> f64 {
        tolerance(&self.grid)
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise maximum; cells are split where the two pieces cross.
    pub fn max(&self, other: &Self) -> Result<Self> {
        self.extremum(other, true)
    }

    /// Pointwise minimum.
    pub fn min(&self, other: &Self) -> Result<Self> {
        self.extremum(other, false)
    }

    fn extremum(&self, other: &Self, take_max: bool) -> Result<Self> {
        self.same_grid(other)?;
        let tol = self.tol();
        let cells = self
            .grid
            .cells()
            .enumerate()
            .map(|(linear, cell)| {
                let mut out = Vec::new();
                for region in overlay(&cell, &[self.pieces(linear), other.pieces(linear)], tol) {
                    let (a, b) = (&region.affines[0], &region.affines[1]);
                    let diff = a.minus(b);
                    let (first, second) = if take_max { (a, b) } else { (b, a) };
                    match classify(&cell, &region.cuts, &diff, tol) {
                        Side::NonNegative => out.push(Piece {
                            cuts: region.cuts,
                            affine: first.clone(),
                        }),
                        Side::NonPositive => out.push(Piece {
                            cuts: region.cuts,
                            affine: second.clone(),
                        }),
                        Side::Both => {
                            let mut upper = region.cuts.clone();
                            upper.push(HalfSpace::from_affine(&diff));
                            let mut lower = region.cuts;
                            lower.push(HalfSpace::from_affine(&diff.scaled(-1.0)));
                            out.push(Piece {
                                cuts: upper,
                                affine: first.clone(),
                            });
                            out.push(Piece {
                                cuts: lower,
                                affine: second.clone(),
                            });
                        }
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            cells,
            continuous: self.continuous && other.continuous,
        })
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let tol = self.tol();
        let cells = self
            .grid
            .cells()
            .enumerate()
            .map(|(linear, cell)| {
                overlay(&cell, &[self.pieces(linear), other.pieces(linear)], tol)
                    .into_iter()
                    .map(|r| {
                        let mut a = r.affines[0].clone();
                        a.add_scaled(factor, &r.affines[1]);
                        Piece {
                            cuts: r.cuts,
                            affine: a,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            cells,
            continuous: self.continuous && other.continuous,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let cells = self
            .cells
            .iter()
            .map(|ps| {
                ps.iter()
                    .map(|p| Piece {
                        cuts: p.cuts.clone(),
                        affine: p.affine.scaled(factor),
                    })
                    .collect()
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            cells,
            continuous: self.continuous,
        }
    }

    /// Zero outside the cells selected by `keep`.
    pub fn masked<F: Fn(&Cell) -> bool>(&self, keep: F) -> Self {
        let n = self.dim();
        let cells = self
            .grid
            .cells()
            .zip(&self.cells)
            .map(|(cell, ps)| {
                if keep(&cell) {
                    ps.clone()
                } else {
                    vec![Piece::whole(Affine::zero(n))]
                }
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            cells,
            continuous: false,
        }
    }

    /// Largest disagreement between pieces that meet at a vertex, over all
    /// piece vertices. Zero for continuous functions.
    pub fn continuity_defect(&self) -> f64 {
        let grid = &self.grid;
        let tol = self.tol();
        let mut worst: f64 = 0.0;
        for (linear, cell) in grid.cells().enumerate() {
            for piece in &self.cells[linear] {
                for v in piece_vertices(&cell, &piece.cuts, tol) {
                    let reference = piece.affine.eval(&v);
                    for other in cells_containing(grid, &v) {
                        let oc = grid.cell(&other);
                        for q in &self.cells[grid.cell_linear_index(&other)] {
                            if q.cuts.iter().all(|h| h.slack(&v) >= -tol) && oc.contains(&v, tol) {
                                worst = worst.max((q.affine.eval(&v) - reference).abs());
                            }
                        }
                    }
                }
            }
        }
        worst
    }
}

pub(crate) fn tolerance(grid: &Grid) -> f64 {
    let scale = (0..grid.n_times())
        .map(|i| grid.upper(i).abs().max(grid.lower(i).abs()))
        .fold(1.0, f64::max);
    1e-9 * scale
}

fn owning_piece<'a>(pieces: &'a [Piece], x: &[f64], tol: f64) -> &'a Piece {
    if let Some(p) = pieces
        .iter()
        .find(|p| p.cuts.iter().all(|h| h.slack(x) >= -tol))
    {
        return p;
    }
    // numerically outside every cut set: take the least violated piece
    pieces
        .iter()
        .max_by(|a, b| {
            let sa = a.cuts.iter().map(|h| h.slack(x)).fold(f64::INFINITY, f64::min);
            let sb = b.cuts.iter().map(|h| h.slack(x)).fold(f64::INFINITY, f64::min);
            sa.total_cmp(&sb)
        })
        .unwrap()
}

fn cells_containing(grid: &Grid, x: &[f64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for (i, &v) in x.iter().enumerate() {
        let p = grid.points(i);
        let js: Vec<usize> = (0..p.len() - 1)
            .filter(|&j| v >= p[j] - 1e-12 * p[j].abs().max(1.0) && v <= p[j + 1] + 1e-12 * p[j + 1].abs().max(1.0))
            .collect();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                js.iter().map(move |&j| {
                    let mut q = prefix.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    out
}

/// Region of a cell produced by overlaying several functions: the shared cut
/// set and each function's affine data on it.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayRegion {
    pub cuts: Vec<HalfSpace>,
    pub affines: Vec<Affine>,
}

/// Common refinement of the pieces of several functions on one cell. Empty
/// or lower-dimensional intersections are dropped.
pub fn overlay(cell: &Cell, functions: &[&[Piece]], tol: f64) -> Vec<OverlayRegion> {
    let mut regions = vec![OverlayRegion {
        cuts: Vec::new(),
        affines: Vec::new(),
    }];
    for pieces in functions {
        let mut next = Vec::with_capacity(regions.len() * pieces.len());
        for r in &regions {
            for p in pieces.iter() {
                let cuts = if r.cuts.is_empty() {
                    p.cuts.clone()
                } else if p.cuts.is_empty() {
                    r.cuts.clone()
                } else {
                    let mut c = r.cuts.clone();
                    c.extend(p.cuts.iter().cloned());
                    if !is_full_dimensional(cell, &c, tol) {
                        continue;
                    }
                    c
                };
                let mut affines = r.affines.clone();
                affines.push(p.affine.clone());
                next.push(OverlayRegion { cuts, affines });
            }
        }
        regions = next;
    }
    regions
}

/// Overlay of whole functions on a given cell (by linear index).
pub fn overlay_functions(
    grid: &Grid,
    cell_linear: usize,
    functions: &[&PiecewiseLinearFunction],
) -> Vec<OverlayRegion> {
    let cell = grid.cell(&grid.cell_multi_index(cell_linear));
    let pieces: Vec<&[Piece]> = functions.iter().map(|f| f.pieces(cell_linear)).collect();
    overlay(&cell, &pieces, tolerance(grid))
}

enum Side {
    NonNegative,
    NonPositive,
    Both,
}

fn classify(cell: &Cell, cuts: &[HalfSpace], a: &Affine, tol: f64) -> Side {
    let scale = cell
        .lo
        .iter()
        .chain(&cell.hi)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let eps = tol * (1.0 + a.magnitude(scale)) / scale.max(1.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in piece_vertices(cell, cuts, tol) {
        let val = a.eval(&v);
        lo = lo.min(val);
        hi = hi.max(val);
    }
    if lo >= -eps {
        Side::NonNegative
    } else if hi <= eps {
        Side::NonPositive
    } else {
        Side::Both
    }
}

/// Vertices of `cell ∩ cuts`. For an uncut cell these are the box corners.
pub fn piece_vertices(cell: &Cell, cuts: &[HalfSpace], tol: f64) -> Vec<Vec<f64>> {
    if cuts.is_empty() {
        return cell.vertices();
    }
    let n = cell.dim();
    let mut constraints = cell.inequalities();
    constraints.extend(cuts.iter().cloned());
    let mut out: Vec<Vec<f64>> = Vec::new();
    for subset in Combinations::new(constraints.len(), n) {
        let mut a = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n);
        for &c in &subset {
            a.extend_from_slice(&constraints[c].normal);
            b.push(constraints[c].bound);
        }
        let Some(x) = solve_dense(n, &mut a, &mut b) else {
            continue;
        };
        if constraints.iter().all(|h| h.slack(&x) >= -tol) && !out.iter().any(|v| close(v, &x, tol)) {
            out.push(x);
        }
    }
    out.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    out
}

pub(crate) fn is_full_dimensional(cell: &Cell, cuts: &[HalfSpace], tol: f64) -> bool {
    let v = piece_vertices(cell, cuts, tol);
    affine_rank(&v, tol) == cell.dim()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn affine_rank(points: &[Vec<f64>], tol: f64) -> usize {
    if points.len() < 2 {
        return 0;
    }
    let n = points[0].len();
    let mut rows: Vec<Vec<f64>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(&points[0]).map(|(a, b)| a - b).collect())
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let pivot = (rank..rows.len()).max_by(|&i, &j| rows[i][col].abs().total_cmp(&rows[j][col].abs()));
        let Some(p) = pivot else { break };
        if rows[p][col].abs() <= tol * 10.0 {
            continue;
        }
        rows.swap(rank, p);
        for i in rank + 1..rows.len() {
            let f = rows[i][col] / rows[rank][col];
            for k in col..n {
                rows[i][k] -= f * rows[rank][k];
            }
        }
        rank += 1;
    }
    rank
}

/// Gaussian elimination with partial pivoting on a row-major `n x n` system.
pub(crate) fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[p * n + col].abs() <= 1e-12 * scale {
            return None;
        }
        if p != col {
            for k in 0..n {
                a.swap(p * n + k, col * n + k);
            }
            b.swap(p, col);
        }
        for i in col + 1..n {
            let f = a[i * n + col] / a[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    a[i * n + k] -= f * a[col * n + k];
                }
                b[i] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Some(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `k`-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: if k <= n { Some((0..k).collect()) } else { None },
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// Curvature a caller declares for a smooth function on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Concave,
}

/// How a smooth payoff is replaced by one affine piece per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Least-squares fit through the cell vertices.
    Interpolate,
    /// Affine function below the payoff on every cell.
    Under,
    /// Affine function above the payoff on every cell.
    Over,
}

pub trait SmoothFunction {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Per-cell affine approximation of a smooth function.
///
/// `Under` uses the tangent at the barycenter on convex cells and a
/// vertex fit shifted down on concave cells; `Over` is the mirror image.
/// Both need a curvature declaration for every cell.
pub fn pwl_approximate(
    h: &dyn SmoothFunction,
    grid: &Arc<Grid>,
    mode: FitMode,
    curvature: &dyn Fn(&Cell) -> Option<Curvature>,
) -> Result<PiecewiseLinearFunction> {
    PiecewiseLinearFunction::from_cells(grid, |cell| {
        let fit = || vertex_fit(cell, |x| h.value(x));
        let tangent = || {
            let c = cell.barycenter();
            let g = h.gradient(&c);
            let offset = h.value(&c) - dot(&g, &c);
            Affine::new(g, offset)
        };
        let shifted = |mut a: Affine, up: bool| {
            let gap = cell
                .vertices()
                .iter()
                .map(|v| if up { h.value(v) - a.eval(v) } else { a.eval(v) - h.value(v) })
                .fold(0.0f64, f64::max);
            a.offset += if up { gap } else { -gap };
            a
        };
        Ok(match mode {
            FitMode::Interpolate => fit(),
            FitMode::Under => match curvature(cell) {
                Some(Curvature::Convex) => tangent(),
                Some(Curvature::Concave) => shifted(fit(), false),
                None => return Err(Error::MissingCurvature("under")),
            },
            FitMode::Over => match curvature(cell) {
                Some(Curvature::Convex) => shifted(fit(), true),
                Some(Curvature::Concave) => tangent(),
                None => return Err(Error::MissingCurvature("over")),
            },
        })
    })
}

/// Least-squares affine fit of `f` through the corners of `cell`.
pub(crate) fn vertex_fit<F: Fn(&[f64]) -> f64>(cell: &Cell, f: F) -> Affine {
    let n = cell.dim();
    let m = n + 1;
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![0.0; m];
    for v in cell.vertices() {
        let y = f(&v);
        let row: Vec<f64> = v.iter().copied().chain(core::iter::once(1.0)).collect();
        for i in 0..m {
            atb[i] += row[i] * y;
            for j in 0..m {
                ata[i * m + j] += row[i] * row[j];
            }
        }
    }
    let sol = solve_dense(m, &mut ata, &mut atb).unwrap_or_else(|| vec![0.0; m]);
    Affine::new(sol[..n].to_vec(), sol[n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid2() -> Arc<Grid> {
        Arc::new(Grid::new(vec![vec![0.0, 30.0, 50.0, 70.0, 100.0]; 2]).unwrap())
    }

    fn sample(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..grid.n_times())
            .map(|i| rng.random_range(grid.lower(i)..=grid.upper(i)))
            .collect()
    }

    #[test]
    fn max_of_coordinates_splits_diagonal_cells() {
        let g = Arc::new(Grid::new(vec![vec![0.0, 1.0]; 2]).unwrap());
        let f = PiecewiseLinearFunction::coordinate(&g, 0)
            .max(&PiecewiseLinearFunction::coordinate(&g, 1))
            .unwrap();
        assert_eq!(f.piece_count(), 2);
        assert_eq!(f.evaluate(&[0.2, 0.7]).unwrap(), 0.7);
        assert_eq!(f.evaluate(&[0.9, 0.1]).unwrap(), 0.9);
    }

    #[test]
    fn max_with_itself_keeps_piece_count() {
        let g = grid2();
        let f = PiecewiseLinearFunction::coordinate(&g, 0)
            .max(&PiecewiseLinearFunction::coordinate(&g, 1))
            .unwrap();
        let ff = f.max(&f).unwrap();
        assert_eq!(ff.piece_count(), f.piece_count());
    }

    #[test]
    fn max_with_zero_is_call() {
        let g = Arc::new(Grid::new(vec![vec![0.0, 50.0, 100.0]]).unwrap());
        let x = PiecewiseLinearFunction::affine(&g, Affine::new(vec![1.0], -50.0));
        let call = x.max(&PiecewiseLinearFunction::constant(&g, 0.0)).unwrap();
        assert_eq!(call.piece_count(), 2);
        assert!(!call.has_cuts());
        assert_eq!(call.evaluate(&[60.0]).unwrap(), 10.0);
        assert_eq!(call.evaluate(&[50.0]).unwrap(), 0.0);
    }

    #[test]
    fn closure_matches_pointwise() {
        let g = grid2();
        let a = PiecewiseLinearFunction::affine(&g, Affine::new(vec![0.7, -0.2], 3.0));
        let b = PiecewiseLinearFunction::affine(&g, Affine::new(vec![-0.4, 0.9], 1.0));
        let c = PiecewiseLinearFunction::affine(&g, Affine::new(vec![0.5, 0.5], -40.0));
        let mx = a.max(&b).unwrap().max(&c).unwrap();
        let mn = a.min(&b).unwrap().min(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let x = sample(&g, &mut rng);
            let (va, vb, vc) = (a.evaluate(&x).unwrap(), b.evaluate(&x).unwrap(), c.evaluate(&x).unwrap());
            assert!((mx.evaluate(&x).unwrap() - va.max(vb).max(vc)).abs() <= 1e-12 * 100.0);
            assert!((mn.evaluate(&x).unwrap() - va.min(vb).min(vc)).abs() <= 1e-12 * 100.0);
        }
        assert!(mx.declared_continuous(true).continuity_defect() < 1e-9);
    }

    #[test]
    fn overlay_drops_empty_intersections() {
        let g = Arc::new(Grid::new(vec![vec![0.0, 1.0]; 2]).unwrap());
        let f = PiecewiseLinearFunction::coordinate(&g, 0)
            .max(&PiecewiseLinearFunction::coordinate(&g, 1))
            .unwrap();
        let regions = overlay_functions(&g, 0, &[&f, &f]);
        assert_eq!(regions.len(), 2);
    }

    #[test]
    fn vertices_of_cut_square() {
        let cell = Cell {
            index: vec![0, 0],
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        let cut = HalfSpace::new(vec![1.0, 1.0], 1.0);
        let v = piece_vertices(&cell, &[cut], 1e-12);
        assert_eq!(v, vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    }

    struct Square;
    impl SmoothFunction for Square {
        fn value(&self, x: &[f64]) -> f64 {
            x[0] * x[0]
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * x[0]]
        }
    }

    #[test]
    fn approximate_square() {
        let g = Arc::new(Grid::new(vec![vec![0.0, 1.0]]).unwrap());
        let convex = |_: &Cell| Some(Curvature::Convex);
        let over = pwl_approximate(&Square, &g, FitMode::Over, &convex).unwrap();
        let a = &over.pieces(0)[0].affine;
        assert!((a.gradient[0] - 1.0).abs() < 1e-12 && a.offset.abs() < 1e-12);
        let under = pwl_approximate(&Square, &g, FitMode::Under, &convex).unwrap();
        let a = &under.pieces(0)[0].affine;
        assert!((a.gradient[0] - 1.0).abs() < 1e-12 && (a.offset + 0.25).abs() < 1e-12);
        assert_eq!(
            pwl_approximate(&Square, &g, FitMode::Under, &|_: &Cell| None),
            Err(Error::MissingCurvature("under"))
        );
    }

    #[test]
    fn under_and_over_sandwich_convex_function() {
        struct Bowl;
        impl SmoothFunction for Bowl {
            fn value(&self, x: &[f64]) -> f64 {
                x[0] * x[0] + 0.5 * x[1] * x[1] + x[0] * x[1] * 0.3
            }
            fn gradient(&self, x: &[f64]) -> Vec<f64> {
                vec![2.0 * x[0] + 0.3 * x[1], x[1] + 0.3 * x[0]]
            }
        }
        let g = Arc::new(Grid::new(vec![vec![-2.0, -0.5, 1.0, 3.0], vec![-1.0, 0.0, 2.0]]).unwrap());
        let convex = |_: &Cell| Some(Curvature::Convex);
        let under = pwl_approximate(&Bowl, &g, FitMode::Under, &convex).unwrap();
        let over = pwl_approximate(&Bowl, &g, FitMode::Over, &convex).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x = sample(&g, &mut rng);
            let v = Bowl.value(&x);
            assert!(under.evaluate(&x).unwrap() <= v + 1e-12);
            assert!(over.evaluate(&x).unwrap() >= v - 1e-12);
        }
    }
}
