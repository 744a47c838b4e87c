//! Per-date discretization points and the induced box partition of the
//! truncated state space.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::market::MarketSnapshot;
use crate::pwl::HalfSpace;
use crate::{Error, Result};

/// Points closer than this (relative to the box width) are merged.
const MERGE_TOL: f64 = 1e-12;

/// Sorted discretization points per monitoring date. The first and last
/// point of each date are the state-box bounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    points: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("no monitoring dates".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() < 2 {
                return Err(Error::InvalidGrid(format!(
                    "time {} needs at least two points",
                    i + 1
                )));
            }
            if p.iter().any(|v| !v.is_finite()) || p.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGrid(format!(
                    "points at time {} must be finite and strictly increasing",
                    i + 1
                )));
            }
        }
        Ok(Self { points })
    }

    /// Merges the state bounds, every quoted strike and the requested extra
    /// points (per date, 0-based outer index) into one sorted grid per date.
    pub fn build(snapshot: &MarketSnapshot, extra_points: &[Vec<f64>]) -> Result<Self> {
        let (lo, hi) = (snapshot.state_lower_bound(), snapshot.state_upper_bound());
        let n = snapshot.n_times();
        let mut points = Vec::with_capacity(n);
        for t in 1..=n {
            let mut p = vec![lo, hi];
            p.extend(snapshot.quotes_at(t).map(|q| q.strike));
            if let Some(extra) = extra_points.get(t - 1) {
                for &x in extra {
                    if !(x >= lo && x <= hi) {
                        return Err(Error::OutsideStateBox {
                            time_index: t,
                            value: x,
                            lower: lo,
                            upper: hi,
                        });
                    }
                    p.push(x);
                }
            }
            points.push(merge_sorted(p, hi - lo));
        }
        Self::new(points)
    }

    pub fn n_times(&self) -> usize {
        self.points.len()
    }

    /// Points of date `i` (0-based).
    pub fn points(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn all_points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn n_intervals(&self, i: usize) -> usize {
        self.points[i].len() - 1
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.points[i][0]
    }

    pub fn upper(&self, i: usize) -> f64 {
        *self.points[i].last().unwrap()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n_times()
            && x
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lower(i) && v <= self.upper(i))
    }

    /// Index of `value` among the points of date `i`, within a relative
    /// tolerance.
    pub fn point_index(&self, i: usize, value: f64) -> Option<usize> {
        let p = &self.points[i];
        let tol = MERGE_TOL * (self.upper(i) - self.lower(i)).max(1.0) * 1e3;
        p.iter().position(|&d| (d - value).abs() <= tol)
    }

    pub fn is_grid_point(&self, i: usize, value: f64) -> bool {
        self.point_index(i, value).is_some()
    }

    pub fn cell_count(&self) -> usize {
        self.points.iter().map(|p| p.len() - 1).product()
    }

    /// Cells in lexicographic multi-index order (first date most significant).
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        MultiIndexIter::new(self.points.iter().map(|p| p.len() - 1).collect())
            .map(move |index| self.cell(&index))
    }

    pub fn cell(&self, index: &[usize]) -> Cell {
        let lo = index
            .iter()
            .enumerate()
            .map(|(i, &j)| self.points[i][j])
            .collect();
        let hi = index
            .iter()
            .enumerate()
            .map(|(i, &j)| self.points[i][j + 1])
            .collect();
        Cell {
            index: index.to_vec(),
            lo,
            hi,
        }
    }

    pub fn cell_linear_index(&self, index: &[usize]) -> usize {
        index
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &j)| acc * self.n_intervals(i) + j)
    }

    pub fn cell_multi_index(&self, mut linear: usize) -> Vec<usize> {
        let mut index = vec![0; self.n_times()];
        for i in (0..self.n_times()).rev() {
            let m = self.n_intervals(i);
            index[i] = linear % m;
            linear /= m;
        }
        index
    }

    /// Owning cell of `x`: per coordinate, the lowest interval containing it.
    pub fn locate(&self, x: &[f64]) -> Option<Vec<usize>> {
        if !self.contains(x) {
            return None;
        }
        Some(
            x.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let p = &self.points[i];
                    // first j with v <= p[j + 1]
                    p[1..].partition_point(|&d| d < v).min(p.len() - 2)
                })
                .collect(),
        )
    }

    /// Boxes spanned by adjacent grid points on the first `k` coordinates,
    /// for `1 <= k <= n - 1`. There are `prod_{i<=k} (n_i - 1)` of them.
    pub fn adjacent_boxes_upto(&self, k: usize) -> Result<Vec<AdjacentBox>> {
        let n = self.n_times();
        if k == 0 || k >= n {
            return Err(Error::LevelOutOfRange {
                k,
                max: n.saturating_sub(1),
            });
        }
        let dims = (0..k).map(|i| self.n_intervals(i)).collect();
        Ok(MultiIndexIter::new(dims)
            .enumerate()
            .map(|(linear, index)| AdjacentBox {
                level: k,
                linear,
                lo: index.iter().enumerate().map(|(i, &j)| self.points[i][j]).collect(),
                hi: index
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| self.points[i][j + 1])
                    .collect(),
                index,
            })
            .collect())
    }

    /// Linear index, among the level-`k` adjacent boxes, of the projection of
    /// the cell with multi-index `cell`.
    pub fn box_linear_index(&self, cell: &[usize], k: usize) -> usize {
        cell[..k]
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &j)| acc * self.n_intervals(i) + j)
    }

    pub fn box_count(&self, k: usize) -> usize {
        (0..k).map(|i| self.n_intervals(i)).product()
    }

    /// Inserts the midpoint of every interval.
    pub fn bisected(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = Vec::with_capacity(2 * p.len() - 1);
                for w in p.windows(2) {
                    q.push(w[0]);
                    q.push(0.5 * (w[0] + w[1]));
                }
                q.push(*p.last().unwrap());
                q
            })
            .collect();
        Self { points }
    }

    pub fn vertex_count(&self) -> usize {
        self.points.iter().map(|p| p.len()).product()
    }
}

fn merge_sorted(mut p: Vec<f64>, width: f64) -> Vec<f64> {
    p.sort_by(f64::total_cmp);
    let tol = MERGE_TOL * width.max(1.0);
    let mut out: Vec<f64> = Vec::with_capacity(p.len());
    for v in p {
        match out.last() {
            Some(&last) if v - last <= tol => {}
            _ => out.push(v),
        }
    }
    out
}

/// Axis-aligned cell `prod_i [lo_i, hi_i]` of the partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// The `2n` faces as `<f, x> >= l`: for each coordinate, `x_i >= lo_i`
    /// followed by `-x_i >= -hi_i`.
    pub fn inequalities(&self) -> Vec<HalfSpace> {
        let n = self.dim();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            out.push(HalfSpace::axis(n, i, 1.0, self.lo[i]));
            out.push(HalfSpace::axis(n, i, -1.0, -self.hi[i]));
        }
        out
    }

    /// Corner points; bit `i` of the position selects `hi_i`.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n).map(|mask| self.vertex(mask)).collect()
    }

    pub fn vertex(&self, mask: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
            .collect()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] - tol && v <= self.hi[i] + tol)
    }
}

/// Box over the first `level` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentBox {
    pub level: usize,
    pub linear: usize,
    pub index: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AdjacentBox {
    pub fn contains_prefix(&self, x: &[f64]) -> bool {
        (0..self.level).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }
}

/// Lexicographic iteration over `prod_i 0..dims[i]`.
pub(crate) struct MultiIndexIter {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl MultiIndexIter {
    pub(crate) fn new(dims: Vec<usize>) -> Self {
        let next = if dims.iter().all(|&d| d > 0) {
            Some(vec![0; dims.len()])
        } else {
            None
        };
        Self { dims, next }
    }
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut i = self.dims.len();
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            succ[i] += 1;
            if succ[i] < self.dims[i] {
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    }
}
