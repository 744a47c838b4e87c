//! Bounded-variable revised simplex with optional delayed column generation.
//!
//! Every row gets an explicit slack (`a x + s = b`), so the basis always has
//! `m` columns. Phase I minimizes a sum of artificials where the slack alone
//! cannot absorb the starting residual. The basis inverse is a dense LU
//! factorization with an eta file on top, refreshed every
//! `refactor_every` updates. Pricing is Dantzig with a switch to Bland's rule
//! after a run of degenerate pivots; the ratio test is Harris' two-pass rule.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::String;
use core::cmp::Reverse;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lp::{LinearProgram, LpSolution, LpStatus, Relation, Sense};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    Dantzig,
    Bland,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Feasibility and optimality tolerance on the scaled problem.
    pub tol: f64,
    pub pivot_tol: f64,
    pub max_iters: usize,
    pub pricing: Pricing,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before Bland's rule takes over.
    pub bland_after: usize,
    pub scaling: bool,
    /// Relative size of the random bound loosening applied against
    /// degeneracy; removed before the solution is reported. 0 disables it.
    pub perturbation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            pivot_tol: 1e-7,
            max_iters: 200_000,
            pricing: Pricing::Dantzig,
            refactor_every: 100,
            bland_after: 50,
            scaling: true,
            perturbation: 1e-9,
        }
    }
}

/// Column produced by a [`ColumnSource`]; `coeffs` are sorted by row.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedColumn {
    pub name: String,
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    pub coeffs: Vec<(usize, f64)>,
}

/// Dual information handed to a pricing oracle.
#[derive(Debug, Clone, Copy)]
pub struct PricingRequest<'a> {
    /// Row duals of the minimization form of the master.
    pub duals: &'a [f64],
    /// 0 while looking for a feasible point, 1 afterwards.
    pub cost_weight: f64,
    /// +1 when the master minimizes, -1 when it maximizes.
    pub sense_sign: f64,
}

impl PricingRequest<'_> {
    /// Reduced cost of a candidate column in the minimization form; a column
    /// at its lower bound improves the master when this is negative.
    pub fn reduced_cost(&self, cost: f64, coeffs: &[(usize, f64)]) -> f64 {
        self.cost_weight * self.sense_sign * cost
            - coeffs.iter().map(|&(r, a)| self.duals[r] * a).sum::<f64>()
    }
}

/// Supplies a master program eagerly and further columns on demand.
pub trait ColumnSource {
    /// Rows, objective sense and the columns present from the start.
    fn master(&self) -> LinearProgram;
    /// Columns that may improve the master at the given duals. Returning an
    /// empty list (or only non-improving columns) ends the solve.
    fn price(&mut self, request: &PricingRequest) -> Vec<GeneratedColumn>;
    /// Size of the full column set, for diagnostics.
    fn total_columns(&self) -> usize;
}

/// Column source backed by a fully built program: the first `initial`
/// columns form the master, the rest are handed out when they price out.
#[derive(Debug, Clone)]
pub struct ExplicitColumnSource {
    lp: LinearProgram,
    initial: usize,
    handed_out: Vec<bool>,
    order: Vec<usize>,
    batch: usize,
}

impl ExplicitColumnSource {
    pub fn new(lp: LinearProgram, initial: usize) -> Self {
        let n = lp.n_vars();
        Self {
            lp,
            initial: initial.min(n),
            handed_out: vec![false; n],
            order: Vec::new(),
            batch: 5,
        }
    }

    /// Columns handed out so far, in the order the solver received them.
    pub fn generated(&self) -> &[usize] {
        &self.order
    }

    /// Maps a column-generation solution back onto the full column set.
    pub fn expand(&self, solution: &LpSolution) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.n_vars()];
        x[..self.initial].copy_from_slice(&solution.x[..self.initial]);
        for (k, &j) in self.order.iter().enumerate() {
            x[j] = solution.x[self.initial + k];
        }
        x
    }
}

impl ColumnSource for ExplicitColumnSource {
    fn master(&self) -> LinearProgram {
        let mut m = self.lp.clone();
        m.var_names.truncate(self.initial);
        m.costs.truncate(self.initial);
        m.lower.truncate(self.initial);
        m.upper.truncate(self.initial);
        m.columns.truncate(self.initial);
        m.blocks.clear();
        m
    }

    fn price(&mut self, request: &PricingRequest) -> Vec<GeneratedColumn> {
        let lp = &self.lp;
        let mut candidates: Vec<(f64, usize)> = (self.initial..lp.n_vars())
            .filter(|&j| !self.handed_out[j])
            .filter_map(|j| {
                let d = request.reduced_cost(lp.costs[j], &lp.columns[j]);
                // a column that starts at its upper bound improves when d > 0
                let start_at_lower = lp.lower[j].is_finite() || !lp.upper[j].is_finite();
                let gain = if start_at_lower { -d } else { d };
                (gain > 1e-9).then_some((gain, j))
            })
            .collect();
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        candidates
            .into_iter()
            .take(self.batch)
            .map(|(_, j)| {
                self.handed_out[j] = true;
                self.order.push(j);
                GeneratedColumn {
                    name: lp.var_names[j].clone(),
                    cost: lp.costs[j],
                    lower: lp.lower[j],
                    upper: lp.upper[j],
                    coeffs: lp.columns[j].clone(),
                }
            })
            .collect()
    }

    fn total_columns(&self) -> usize {
        self.lp.n_vars()
    }
}

/// Solves `lp` to optimality, infeasibility, unboundedness or the iteration
/// limit.
pub fn solve(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution> {
    lp.validate()?;
    let mut s = Simplex::new(lp, opts);
    let status = s.run(None);
    Ok(s.finish(lp, status))
}

/// Solves the master of `source`, adding columns while the pricing oracle
/// finds improving ones. The solution lists declared columns first, then
/// generated columns in the order they were produced.
pub fn solve_column_generation(source: &mut dyn ColumnSource, opts: &SolverOptions) -> Result<LpSolution> {
    let master = source.master();
    master.validate()?;
    let mut s = Simplex::new(&master, opts);
    s.shift_bounds = false;
    let status = s.run(Some(source));
    let mut full = master;
    for v in &s.vars[s.n_declared..] {
        if let Kind::Generated(ref g) = v.kind {
            full.add_var(g.name.clone(), g.cost, g.lower, g.upper);
            let j = full.n_vars() - 1;
            full.columns[j] = g.coeffs.clone();
        }
    }
    Ok(s.finish(&full, status))
}

#[derive(Debug, Clone)]
enum Kind {
    Structural,
    Slack(usize),
    Artificial(usize),
    Generated(GeneratedColumn),
}

#[derive(Debug, Clone)]
struct Var {
    kind: Kind,
    lo: f64,
    up: f64,
    /// Phase II cost, minimization form, scaled.
    cost: f64,
    /// Scaled column.
    col: Vec<(usize, f64)>,
    /// Original value = `scale * internal value`.
    scale: f64,
}

impl Var {
    fn is_fixed(&self) -> bool {
        self.lo == self.up
    }
}

const NONBASIC: usize = usize::MAX;

struct Eta {
    r: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// Sparse `B Q = L U` built column by column (left-looking) with partial
/// pivoting. Step `k` pivots on row `prow[k]` of basis position `pcol[k]`.
/// `L` has a unit diagonal and column `k` only touches rows pivoted later;
/// `U` is stored by columns in step indices.
struct SparseLu {
    prow: Vec<usize>,
    pcol: Vec<usize>,
    l: Vec<Vec<(usize, f64)>>,
    u: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl SparseLu {
    /// Factors the matrix whose `k`-th column is `cols[k]`. On a (numerically)
    /// singular column returns its position and the rows not yet pivoted.
    fn factor(m: usize, cols: &[&[(usize, f64)]], pivot_tol: f64) -> core::result::Result<Self, (usize, Vec<usize>)> {
        const NONE: usize = usize::MAX;
        // sparse columns first keeps slack pivots free of fill
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&k| (cols[k].len(), k));
        let mut step_of_row = vec![NONE; m];
        let mut lu = Self {
            prow: Vec::with_capacity(m),
            pcol: Vec::with_capacity(m),
            l: Vec::with_capacity(m),
            u: Vec::with_capacity(m),
            diag: Vec::with_capacity(m),
        };
        let mut work = vec![0.0; m];
        let mut touched = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut queued = vec![false; m];
        let mut pending: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
        for (k, &c) in order.iter().enumerate() {
            for &(r, v) in cols[c] {
                if !touched[r] {
                    touched[r] = true;
                    pattern.push(r);
                }
                work[r] += v;
            }
            // apply earlier L columns in step order; fill only lands on rows
            // pivoted later, so a min-heap of pending steps suffices
            for &r in &pattern {
                if step_of_row[r] != NONE && !queued[step_of_row[r]] {
                    queued[step_of_row[r]] = true;
                    pending.push(Reverse(step_of_row[r]));
                }
            }
            while let Some(Reverse(j)) = pending.pop() {
                queued[j] = false;
                let xj = work[lu.prow[j]];
                if xj == 0.0 {
                    continue;
                }
                for &(i, l) in &lu.l[j] {
                    if !touched[i] {
                        touched[i] = true;
                        pattern.push(i);
                    }
                    work[i] -= l * xj;
                    let si = step_of_row[i];
                    if si != NONE && !queued[si] {
                        queued[si] = true;
                        pending.push(Reverse(si));
                    }
                }
            }
            let mut best = NONE;
            let mut best_abs = pivot_tol;
            for &r in &pattern {
                if step_of_row[r] == NONE && work[r].abs() > best_abs {
                    best_abs = work[r].abs();
                    best = r;
                }
            }
            if best == NONE {
                let free: Vec<usize> = (0..m).filter(|&r| step_of_row[r] == NONE).collect();
                return Err((c, free));
            }
            let pivot = work[best];
            let mut ucol = Vec::new();
            let mut lcol = Vec::new();
            for &r in &pattern {
                let v = work[r];
                if r == best || v == 0.0 {
                    continue;
                }
                if step_of_row[r] != NONE {
                    ucol.push((step_of_row[r], v));
                } else {
                    lcol.push((r, v / pivot));
                }
            }
            for &r in &pattern {
                work[r] = 0.0;
                touched[r] = false;
            }
            pattern.clear();
            step_of_row[best] = k;
            lu.prow.push(best);
            lu.pcol.push(c);
            lu.l.push(lcol);
            lu.u.push(ucol);
            lu.diag.push(pivot);
        }
        Ok(lu)
    }

    /// `B x = rhs`, in place.
    fn solve(&self, rhs: &mut [f64]) {
        let m = self.prow.len();
        let mut y = vec![0.0; m];
        for k in 0..m {
            let v = rhs[self.prow[k]];
            y[k] = v;
            if v != 0.0 {
                for &(i, l) in &self.l[k] {
                    rhs[i] -= l * v;
                }
            }
        }
        for k in (0..m).rev() {
            let z = y[k] / self.diag[k];
            y[k] = z;
            if z != 0.0 {
                for &(j, u) in &self.u[k] {
                    y[j] -= u * z;
                }
            }
        }
        for k in 0..m {
            rhs[self.pcol[k]] = y[k];
        }
    }

    /// `B' y = rhs`, in place.
    fn solve_transpose(&self, rhs: &mut [f64]) {
        let m = self.prow.len();
        let mut v = vec![0.0; m];
        for k in 0..m {
            let s: f64 = self.u[k].iter().map(|&(j, u)| u * v[j]).sum();
            v[k] = (rhs[self.pcol[k]] - s) / self.diag[k];
        }
        for k in (0..m).rev() {
            let s: f64 = self.l[k].iter().map(|&(i, l)| l * rhs[i]).sum();
            rhs[self.prow[k]] = v[k] - s;
        }
    }
}

struct Simplex<'o> {
    opts: &'o SolverOptions,
    m: usize,
    sense_sign: f64,
    vars: Vec<Var>,
    n_declared: usize,
    row_scale: Vec<f64>,
    /// Power of two the costs were multiplied by.
    cost_scale: f64,
    /// Objective factor of the equilibration (part of `cost_scale`).
    obj_scale: f64,
    b: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    position: Vec<usize>,
    lu: Option<SparseLu>,
    etas: Vec<Eta>,
    phase_one: bool,
    iterations: usize,
    degenerate_run: usize,
    /// Exact bounds of variables whose bounds are perturbed or shifted.
    exact_bounds: BTreeMap<usize, (f64, f64)>,
    /// Explicit solves absorb Harris overshoot into bounds; column generation snaps.
    shift_bounds: bool,
}

fn power_of_two_scale(max_abs: f64) -> f64 {
    if max_abs == 0.0 || !max_abs.is_finite() {
        return 1.0;
    }
    let (_, exp) = libm::frexp(max_abs);
    libm::ldexp(1.0, -exp)
}

/// Power of two close to `1 / sqrt(min |v| * max |v|)` over the nonzeros.
fn geometric_scale(values: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in values {
        let a = v.abs();
        if a > 0.0 {
            lo = lo.min(a);
            hi = hi.max(a);
        }
    }
    if hi == 0.0 {
        return 1.0;
    }
    power_of_two_scale(libm::sqrt(lo * hi))
}

/// Row factors and an objective factor from a few alternating passes of
/// geometric-mean scaling; the objective takes part as one more row.
fn equilibrate(lp: &LinearProgram) -> (Vec<f64>, f64) {
    let m = lp.n_rows();
    let mut row = vec![1.0; m + 1];
    let mut col = vec![1.0; lp.n_vars()];
    let entries = |j: usize| lp.columns[j].iter().copied().chain(Some((m, lp.costs[j])));
    for _ in 0..4 {
        let mut lo = vec![f64::INFINITY; m + 1];
        let mut hi = vec![0.0f64; m + 1];
        for (j, c) in col.iter().enumerate() {
            for (r, v) in entries(j) {
                let a = (v * c).abs();
                if a > 0.0 {
                    lo[r] = lo[r].min(a);
                    hi[r] = hi[r].max(a);
                }
            }
        }
        for i in 0..=m {
            if hi[i] > 0.0 {
                row[i] = power_of_two_scale(libm::sqrt(lo[i] * hi[i]));
            }
        }
        for (j, c) in col.iter_mut().enumerate() {
            *c = geometric_scale(entries(j).map(|(r, v)| v * row[r]));
        }
    }
    let obj = row.pop().unwrap_or(1.0);
    (row, obj)
}

impl<'o> Simplex<'o> {
    fn new(lp: &LinearProgram, opts: &'o SolverOptions) -> Self {
        let m = lp.n_rows();
        let n = lp.n_vars();
        let sense_sign = lp.sense.sign();
        let (row_scale, obj_scale) = if opts.scaling { equilibrate(lp) } else { (vec![1.0; m], 1.0) };
        let mut vars = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            vars.push(Self::make_var(
                Kind::Structural,
                lp.costs[j] * sense_sign * obj_scale,
                lp.lower[j],
                lp.upper[j],
                &lp.columns[j],
                &row_scale,
                opts.scaling,
            ));
        }
        // objective normalized to a power of two so that a rescaled
        // program follows the same pivots
        let cost_norm = if opts.scaling {
            power_of_two_scale(vars.iter().fold(0.0f64, |a, v| a.max(v.cost.abs())))
        } else {
            1.0
        };
        for v in &mut vars {
            v.cost *= cost_norm;
        }
        let cost_scale = obj_scale * cost_norm;
        for i in 0..m {
            let (lo, up) = match lp.relations[i] {
                Relation::LessEq => (0.0, f64::INFINITY),
                Relation::GreaterEq => (f64::NEG_INFINITY, 0.0),
                Relation::Equal => (0.0, 0.0),
            };
            vars.push(Var {
                kind: Kind::Slack(i),
                lo,
                up,
                cost: 0.0,
                col: vec![(i, 1.0)],
                scale: 1.0 / row_scale[i],
            });
        }
        for i in 0..m {
            vars.push(Var {
                kind: Kind::Artificial(i),
                lo: 0.0,
                up: 0.0,
                cost: 0.0,
                col: vec![(i, 1.0)],
                scale: 1.0 / row_scale[i],
            });
        }
        let b = lp.rhs.iter().zip(&row_scale).map(|(b, s)| b * s).collect();
        let nv = vars.len();
        Self {
            opts,
            m,
            sense_sign,
            vars,
            n_declared: n,
            row_scale,
            cost_scale,
            obj_scale,
            b,
            x: vec![0.0; nv],
            head: Vec::new(),
            position: vec![NONBASIC; nv],
            lu: None,
            etas: Vec::new(),
            phase_one: false,
            iterations: 0,
            degenerate_run: 0,
            exact_bounds: BTreeMap::new(),
            shift_bounds: true,
        }
    }

    fn make_var(
        kind: Kind,
        cost: f64,
        lo: f64,
        up: f64,
        col: &[(usize, f64)],
        row_scale: &[f64],
        scaling: bool,
    ) -> Var {
        let scaled: Vec<(usize, f64)> = col.iter().map(|&(r, v)| (r, v * row_scale[r])).collect();
        let scale = if scaling { 1.0 / geometric_scale(scaled.iter().map(|e| e.1).chain(Some(cost))) } else { 1.0 };
        // x = scale * x', so the internal column is multiplied by `scale`
        Var {
            kind,
            lo: lo / scale,
            up: up / scale,
            cost: cost * scale,
            col: scaled.into_iter().map(|(r, v)| (r, v * scale)).collect(),
            scale,
        }
    }

    fn cost(&self, j: usize) -> f64 {
        let v = &self.vars[j];
        match v.kind {
            Kind::Artificial(_) => {
                if self.phase_one {
                    1.0
                } else {
                    0.0
                }
            }
            _ if self.phase_one => 0.0,
            _ => v.cost,
        }
    }

    fn initial_value(v: &Var) -> f64 {
        if v.lo.is_finite() {
            v.lo
        } else if v.up.is_finite() {
            v.up
        } else {
            0.0
        }
    }

    /// Slack/artificial starting basis for the current nonbasic values.
    /// Returns whether any artificial is in use.
    fn crash(&mut self, keep_values: bool) -> bool {
        let m = self.m;
        let slack0 = self.n_declared;
        for j in 0..self.vars.len() {
            self.position[j] = NONBASIC;
            let is_row_var = matches!(self.vars[j].kind, Kind::Slack(_) | Kind::Artificial(_));
            if is_row_var || !keep_values {
                self.x[j] = Self::initial_value(&self.vars[j]);
            } else {
                let v = &self.vars[j];
                self.x[j] = self.x[j].clamp(v.lo, v.up);
                if !self.x[j].is_finite() {
                    self.x[j] = Self::initial_value(v);
                }
            }
            if let Kind::Artificial(_) = self.vars[j].kind {
                self.vars[j].lo = 0.0;
                self.vars[j].up = 0.0;
                self.x[j] = 0.0;
            }
        }
        let mut residual = self.b.clone();
        for (j, v) in self.vars.iter().enumerate() {
            if matches!(v.kind, Kind::Structural | Kind::Generated(_)) && self.x[j] != 0.0 {
                for &(r, a) in &v.col {
                    residual[r] -= a * self.x[j];
                }
            }
        }
        self.head = Vec::with_capacity(m);
        let mut any_artificial = false;
        for (i, &r) in residual.iter().enumerate() {
            let s = slack0 + i;
            let art = slack0 + m + i;
            let (lo, up) = (self.vars[s].lo, self.vars[s].up);
            let tol = self.opts.tol;
            if r >= lo - tol && r <= up + tol {
                self.x[s] = r;
                self.head.push(s);
                self.position[s] = i;
            } else {
                let at = r.clamp(lo, up);
                self.x[s] = at;
                let rest = r - at;
                let sign = if rest >= 0.0 { 1.0 } else { -1.0 };
                self.vars[art].col = vec![(i, sign)];
                self.vars[art].up = f64::INFINITY;
                self.x[art] = rest.abs();
                self.head.push(art);
                self.position[art] = i;
                any_artificial = true;
            }
        }
        self.etas.clear();
        self.lu = None;
        any_artificial
    }

    fn perturb(&mut self) {
        let delta = self.opts.perturbation;
        if delta <= 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1e55);
        for (j, v) in self.vars.iter_mut().enumerate() {
            if matches!(v.kind, Kind::Artificial(_)) || v.is_fixed() {
                continue;
            }
            self.exact_bounds.entry(j).or_insert((v.lo, v.up));
            if v.lo.is_finite() {
                v.lo -= delta * (1.0 + v.lo.abs()) * rng.random_range(1.0..2.0);
            }
            if v.up.is_finite() {
                v.up += delta * (1.0 + v.up.abs()) * rng.random_range(1.0..2.0);
            }
        }
    }

    /// Widens the bounds of basic variables that drifted outside them, so
    /// the basis stays feasible; undone by [`Self::unperturb`].
    fn shift_infeasible(&mut self) {
        let tol = self.opts.tol;
        for &j in &self.head {
            let v = &mut self.vars[j];
            if matches!(v.kind, Kind::Artificial(_)) {
                continue;
            }
            let x = self.x[j];
            if x < v.lo - tol || x > v.up + tol {
                self.exact_bounds.entry(j).or_insert((v.lo, v.up));
                v.lo = v.lo.min(x - tol);
                v.up = v.up.max(x + tol);
            }
        }
    }

    /// Replaces basic artificials (all near zero after phase I) by other
    /// columns through degenerate pivots, then fixes every artificial at 0.
    /// Artificials of redundant rows stay basic.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if !matches!(self.vars[self.head[r]].kind, Kind::Artificial(_)) {
                continue;
            }
            let mut rho = vec![0.0; self.m];
            rho[r] = 1.0;
            self.btran(&mut rho);
            let mut best = None;
            let mut best_abs = self.opts.pivot_tol.max(1e-5);
            for (j, v) in self.vars.iter().enumerate() {
                if self.position[j] != NONBASIC || v.is_fixed() || matches!(v.kind, Kind::Artificial(_)) {
                    continue;
                }
                let a: f64 = v.col.iter().map(|&(i, c)| rho[i] * c).sum();
                if a.abs() > best_abs {
                    best_abs = a.abs();
                    best = Some(j);
                }
            }
            let Some(q) = best else { continue };
            let mut alpha = vec![0.0; self.m];
            for &(i, a) in &self.vars[q].col {
                alpha[i] = a;
            }
            self.ftran_lu(&mut alpha);
            let out = self.head[r];
            self.position[out] = NONBASIC;
            self.head[r] = q;
            self.position[q] = r;
            let entries = alpha
                .iter()
                .enumerate()
                .filter(|&(i, &a)| i != r && a != 0.0)
                .map(|(i, &a)| (i, a))
                .collect();
            self.etas.push(Eta { r, pivot: alpha[r], entries });
            if self.etas.len() >= self.opts.refactor_every {
                self.refactor();
            }
        }
        for j in 0..self.vars.len() {
            if let Kind::Artificial(_) = self.vars[j].kind {
                self.vars[j].lo = 0.0;
                self.vars[j].up = 0.0;
                if self.position[j] == NONBASIC {
                    self.x[j] = 0.0;
                }
            }
        }
        self.refactor();
        self.shift_infeasible();
    }

    /// Makes `out` nonbasic at its lower or upper bound. A value already past
    /// the bound (within the Harris tolerance) is kept and the bound shifted
    /// to it, so the rows stay satisfied.
    fn leave_at_bound(&mut self, out: usize, to_lower: bool) {
        let x = self.x[out];
        let v = &mut self.vars[out];
        let bound = if to_lower { v.lo } else { v.up };
        if x == bound || !self.shift_bounds || matches!(v.kind, Kind::Artificial(_)) {
            self.x[out] = bound;
            return;
        }
        let past = if to_lower { x < bound } else { x > bound };
        if past {
            self.exact_bounds.entry(out).or_insert((v.lo, v.up));
            if to_lower {
                v.lo = x;
            } else {
                v.up = x;
            }
        } else {
            self.x[out] = bound;
        }
    }

    /// Restores exact bounds, moving nonbasic variables onto them. Returns
    /// false when nothing was perturbed.
    fn unperturb(&mut self) -> bool {
        if self.exact_bounds.is_empty() {
            return false;
        }
        let bounds = core::mem::take(&mut self.exact_bounds);
        for (j, (lo, up)) in bounds {
            let v = &mut self.vars[j];
            v.lo = lo;
            v.up = up;
            if self.position[j] == NONBASIC {
                self.x[j] = self.x[j].clamp(lo, up);
            }
        }
        self.refactor();
        true
    }

    /// Dual simplex pivots from a dual feasible basis until every basic
    /// variable is within its bounds. `None` means primal feasible.
    fn dual_cleanup(&mut self) -> Option<LpStatus> {
        let tol = self.opts.tol;
        let budget = self.iterations + 1000 + 2 * self.m;
        loop {
            if self.iterations >= self.opts.max_iters {
                return Some(LpStatus::IterationLimit);
            }
            if self.iterations >= budget {
                // give up on the warm basis
                return Some(LpStatus::Infeasible);
            }
            if self.etas.len() >= self.opts.refactor_every {
                self.refactor();
            }
            let mut leave = None;
            let mut worst = tol;
            for (k, &j) in self.head.iter().enumerate() {
                let v = &self.vars[j];
                if v.lo - self.x[j] > worst {
                    worst = v.lo - self.x[j];
                    leave = Some((k, true));
                }
                if self.x[j] - v.up > worst {
                    worst = self.x[j] - v.up;
                    leave = Some((k, false));
                }
            }
            let (r, to_lower) = leave?;
            let y = self.duals();
            let mut rho = vec![0.0; self.m];
            rho[r] = 1.0;
            self.btran(&mut rho);
            // (reduced cost towards the bound, pivot, index) of eligible columns
            let mut eligible = Vec::new();
            for j in 0..self.vars.len() {
                let v = &self.vars[j];
                if self.position[j] != NONBASIC || v.is_fixed() {
                    continue;
                }
                let a: f64 = v.col.iter().map(|&(i, c)| rho[i] * c).sum();
                if a.abs() <= self.opts.pivot_tol {
                    continue;
                }
                // the entering variable must push x_r towards its bound
                let dir = if to_lower { -a.signum() } else { a.signum() };
                if (dir > 0.0 && self.x[j] >= v.up) || (dir < 0.0 && self.x[j] <= v.lo) {
                    continue;
                }
                eligible.push(((dir * self.reduced_cost(j, &y)).max(0.0), a.abs(), j));
            }
            // Harris: bound the dual step with relaxed reduced costs, then take
            // the largest pivot among the columns that bind within it
            let bound = eligible.iter().map(|&(d, a, _)| (d + tol) / a).fold(f64::INFINITY, f64::min);
            let mut best: Option<usize> = None;
            let mut best_pivot = 0.0;
            for &(d, a, j) in &eligible {
                if d / a <= bound && a > best_pivot {
                    best_pivot = a;
                    best = Some(j);
                }
            }
            let Some(q) = best else {
                return Some(LpStatus::Infeasible);
            };
            let mut alpha = vec![0.0; self.m];
            for &(i, a) in &self.vars[q].col {
                alpha[i] = a;
            }
            self.ftran_lu(&mut alpha);
            let out = self.head[r];
            let target = if to_lower { self.vars[out].lo } else { self.vars[out].up };
            let step = (self.x[out] - target) / alpha[r];
            self.x[q] += step;
            for (k, &j) in self.head.iter().enumerate() {
                self.x[j] -= alpha[k] * step;
            }
            self.x[out] = target;
            self.position[out] = NONBASIC;
            self.head[r] = q;
            self.position[q] = r;
            let entries = alpha
                .iter()
                .enumerate()
                .filter(|&(i, &a)| i != r && a != 0.0)
                .map(|(i, &a)| (i, a))
                .collect();
            self.etas.push(Eta { r, pivot: alpha[r], entries });
            self.iterations += 1;
        }
    }

    fn run(&mut self, mut source: Option<&mut (dyn ColumnSource + '_)>) -> LpStatus {
        let mut keep_values = false;
        let mut restarts = 0;
        loop {
            if restarts > 3 {
                return LpStatus::IterationLimit;
            }
            restarts += 1;
            if source.is_none() {
                // column generation bases tend to be ill-conditioned, and
                // new columns already move degenerate masters along
                self.perturb();
            }
            let needs_phase_one = self.crash(keep_values);
            self.refactor();
            if needs_phase_one || source.is_some() {
                self.phase_one = true;
                if let Some(status) = self.optimize(source.as_deref_mut()) {
                    if status != LpStatus::Unbounded {
                        return status;
                    }
                }
                self.refactor();
                let infeasibility = self.artificial_sum();
                let bmax = self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if infeasibility > self.opts.tol * (1.0 + bmax) {
                    return LpStatus::Infeasible;
                }
            }
            self.phase_one = false;
            self.drive_out_artificials();
            match self.optimize(source.as_deref_mut()) {
                Some(LpStatus::Infeasible) => {
                    // the basis had to be repaired and lost feasibility
                    keep_values = true;
                    continue;
                }
                Some(status) => return status,
                None => {}
            }
            let mut rounds = 0;
            let mut failed = false;
            while self.unperturb() {
                rounds += 1;
                match self.dual_cleanup() {
                    Some(LpStatus::Infeasible) => {
                        failed = true;
                        break;
                    }
                    Some(status) => return status,
                    None => {}
                }
                if rounds > 5 {
                    break;
                }
                if let Some(status) = self.optimize(source.as_deref_mut()) {
                    return status;
                }
            }
            if failed || !self.exact_bounds.is_empty() {
                keep_values = true;
                continue;
            }
            self.refactor();
            let worst = self
                .vars
                .iter()
                .zip(&self.x)
                .map(|(v, &x)| (v.lo - x).max(x - v.up).max(0.0))
                .fold(0.0, f64::max);
            if worst > 10.0 * self.opts.tol {
                keep_values = true;
                continue;
            }
            return LpStatus::Optimal;
        }
    }

    fn artificial_sum(&self) -> f64 {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| matches!(v.kind, Kind::Artificial(_)))
            .map(|(j, _)| self.x[j].abs())
            .sum()
    }

    /// Refactors the basis, repairing singular columns with slacks, and
    /// recomputes the basic values from the nonbasic ones.
    fn refactor(&mut self) {
        let m = self.m;
        loop {
            let cols: Vec<&[(usize, f64)]> = self.head.iter().map(|&j| self.vars[j].col.as_slice()).collect();
            match SparseLu::factor(m, &cols, self.opts.pivot_tol * 1e-2) {
                Ok(lu) => {
                    self.lu = Some(lu);
                    break;
                }
                Err((k, rows)) => {
                    let slack0 = self.n_declared;
                    let row = rows
                        .into_iter()
                        .find(|&r| self.position[slack0 + r] == NONBASIC)
                        .expect("an unpivoted row has a nonbasic slack");
                    let out = self.head[k];
                    self.position[out] = NONBASIC;
                    let v = &self.vars[out];
                    self.x[out] = self.x[out].clamp(v.lo, v.up);
                    if !self.x[out].is_finite() {
                        self.x[out] = 0.0;
                    }
                    self.head[k] = slack0 + row;
                    self.position[slack0 + row] = k;
                }
            }
        }
        self.etas.clear();
        let mut rhs = self.b.clone();
        for (j, v) in self.vars.iter().enumerate() {
            if self.position[j] == NONBASIC && self.x[j] != 0.0 {
                for &(r, a) in &v.col {
                    rhs[r] -= a * self.x[j];
                }
            }
        }
        self.ftran_lu(&mut rhs);
        for (k, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[k];
        }
    }

    fn ftran_lu(&self, v: &mut [f64]) {
        if let Some(lu) = &self.lu {
            lu.solve(v);
        }
        for eta in &self.etas {
            let xr = v[eta.r] / eta.pivot;
            v[eta.r] = xr;
            if xr != 0.0 {
                for &(i, a) in &eta.entries {
                    v[i] -= a * xr;
                }
            }
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let s: f64 = eta.entries.iter().map(|&(i, a)| v[i] * a).sum();
            v[eta.r] = (v[eta.r] - s) / eta.pivot;
        }
        if let Some(lu) = &self.lu {
            lu.solve_transpose(v);
        }
    }

    fn duals(&self) -> Vec<f64> {
        let mut y: Vec<f64> = self.head.iter().map(|&j| self.cost(j)).collect();
        self.btran(&mut y);
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost(j) - self.vars[j].col.iter().map(|&(r, a)| y[r] * a).sum::<f64>()
    }

    /// Direction an improving nonbasic variable would move in, if any.
    fn improving_direction(&self, j: usize, d: f64) -> Option<f64> {
        let v = &self.vars[j];
        let tol = self.opts.tol;
        if d < -tol && self.x[j] < v.up {
            Some(1.0)
        } else if d > tol && self.x[j] > v.lo {
            Some(-1.0)
        } else {
            None
        }
    }

    fn bland_mode(&self) -> bool {
        self.opts.pricing == Pricing::Bland || self.degenerate_run >= self.opts.bland_after
    }

    fn choose_entering(&self, y: &[f64]) -> Option<(usize, f64)> {
        let bland = self.bland_mode();
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.vars.len() {
            if self.position[j] != NONBASIC || self.vars[j].is_fixed() {
                continue;
            }
            let d = self.reduced_cost(j, y);
            if let Some(dir) = self.improving_direction(j, d) {
                if bland {
                    return Some((j, dir));
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    best = Some((j, dir));
                }
            }
        }
        best
    }

    /// Adds columns from the oracle; true when one of them improves.
    fn generate(&mut self, source: &mut (dyn ColumnSource + '_), y: &[f64]) -> bool {
        let duals: Vec<f64> = y.iter().zip(&self.row_scale).map(|(v, s)| v * s / self.cost_scale).collect();
        let request = PricingRequest {
            duals: &duals,
            cost_weight: if self.phase_one { 0.0 } else { 1.0 },
            sense_sign: self.sense_sign,
        };
        let columns = source.price(&request);
        if columns.is_empty() {
            return false;
        }
        let mut improving = false;
        let mut moved = false;
        for g in columns {
            let mut var = Self::make_var(
                Kind::Generated(g.clone()),
                g.cost * self.sense_sign * self.obj_scale,
                g.lower,
                g.upper,
                &g.coeffs,
                &self.row_scale,
                self.opts.scaling,
            );
            var.cost *= self.cost_scale / self.obj_scale;
            let start = Self::initial_value(&var);
            self.vars.push(var);
            self.x.push(start);
            self.position.push(NONBASIC);
            let j = self.vars.len() - 1;
            moved |= start != 0.0;
            let d = self.reduced_cost(j, y);
            improving |= self.improving_direction(j, d).is_some();
        }
        if moved {
            self.refactor();
        }
        improving
    }

    /// Runs simplex iterations in the current phase. `None` means optimal.
    fn optimize(&mut self, mut source: Option<&mut (dyn ColumnSource + '_)>) -> Option<LpStatus> {
        let tol = self.opts.tol;
        loop {
            if self.iterations >= self.opts.max_iters {
                return Some(LpStatus::IterationLimit);
            }
            if self.phase_one && self.artificial_sum() <= 0.01 * tol {
                return None;
            }
            if self.etas.len() >= self.opts.refactor_every {
                self.refactor();
                self.shift_infeasible();
            }
            let y = self.duals();
            let (q, dir) = match self.choose_entering(&y) {
                Some(e) => e,
                None => {
                    if let Some(src) = source.as_deref_mut() {
                        if self.generate(src, &y) {
                            continue;
                        }
                    }
                    return None;
                }
            };
            let mut alpha = vec![0.0; self.m];
            for &(r, a) in &self.vars[q].col {
                alpha[r] = a;
            }
            self.ftran_lu(&mut alpha);
            let alpha_max = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            let mut pivot_tol = self.opts.pivot_tol * alpha_max.max(1.0);

            let entering = &self.vars[q];
            let range = if dir > 0.0 { entering.up - self.x[q] } else { self.x[q] - entering.lo };
            let bland = self.bland_mode();

            // pass 1: largest step with bounds relaxed by `tol`
            let mut theta_max = f64::INFINITY;
            for attempt in 0..2 {
                for (k, &j) in self.head.iter().enumerate() {
                    let rate = -dir * alpha[k];
                    let v = &self.vars[j];
                    let relaxed = if rate < -pivot_tol && v.lo.is_finite() {
                        (self.x[j] - v.lo + if bland { 0.0 } else { tol }) / -rate
                    } else if rate > pivot_tol && v.up.is_finite() {
                        (v.up - self.x[j] + if bland { 0.0 } else { tol }) / rate
                    } else {
                        continue;
                    };
                    theta_max = theta_max.min(relaxed.max(0.0));
                }
                if theta_max < f64::INFINITY || range < f64::INFINITY || attempt == 1 {
                    break;
                }
                // small entries were skipped; only call it a ray if they
                // do not block either
                pivot_tol = 1e-11;
            }
            if theta_max == f64::INFINITY && range == f64::INFINITY {
                return Some(LpStatus::Unbounded);
            }
            // pass 2: among rows blocking within theta_max take the largest pivot
            let mut leave: Option<(usize, f64, bool)> = None;
            let mut best_pivot = 0.0;
            let mut best_var = usize::MAX;
            for (k, &j) in self.head.iter().enumerate() {
                let rate = -dir * alpha[k];
                let v = &self.vars[j];
                let (exact, to_lower) = if rate < -pivot_tol && v.lo.is_finite() {
                    ((self.x[j] - v.lo) / -rate, true)
                } else if rate > pivot_tol && v.up.is_finite() {
                    ((v.up - self.x[j]) / rate, false)
                } else {
                    continue;
                };
                if exact > theta_max {
                    continue;
                }
                let better = if bland {
                    j < best_var
                } else {
                    alpha[k].abs() > best_pivot
                };
                if better {
                    best_pivot = alpha[k].abs();
                    best_var = j;
                    leave = Some((k, exact.max(0.0), to_lower));
                }
            }

            let flip = match leave {
                None => true,
                Some((_, theta, _)) => range <= theta,
            };
            let theta = if flip { range } else { leave.unwrap().1 };
            self.iterations += 1;
            if theta <= 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            self.x[q] += dir * theta;
            if theta != 0.0 {
                for (k, &j) in self.head.iter().enumerate() {
                    self.x[j] -= dir * alpha[k] * theta;
                }
            }
            if flip {
                let v = &self.vars[q];
                self.x[q] = if dir > 0.0 { v.up } else { v.lo };
                continue;
            }
            let (r, _, to_lower) = leave.unwrap();
            let out = self.head[r];
            self.leave_at_bound(out, to_lower);
            self.position[out] = NONBASIC;
            self.head[r] = q;
            self.position[q] = r;
            let entries = alpha
                .iter()
                .enumerate()
                .filter(|&(i, &a)| i != r && a != 0.0)
                .map(|(i, &a)| (i, a))
                .collect();
            self.etas.push(Eta {
                r,
                pivot: alpha[r],
                entries,
            });
        }
    }

    fn finish(&mut self, lp: &LinearProgram, status: LpStatus) -> LpSolution {
        let m = self.m;
        let mut x = Vec::with_capacity(lp.n_vars());
        for (j, v) in self.vars.iter().enumerate() {
            if matches!(v.kind, Kind::Structural | Kind::Generated(_)) {
                x.push(self.x[j] * v.scale);
            }
        }
        let n = x.len();
        let duals: Vec<f64> = if status == LpStatus::Optimal {
            self.duals()
                .iter()
                .zip(&self.row_scale)
                .map(|(y, s)| y * s * self.sense_sign / self.cost_scale)
                .collect()
        } else {
            vec![0.0; m]
        };
        let reduced_costs = lp.reduced_costs(&duals);
        let mut basis: Vec<usize> = self
            .head
            .iter()
            .map(|&j| match self.vars[j].kind {
                Kind::Slack(i) => n + i,
                Kind::Artificial(i) => n + m + i,
                _ => self.structural_index(j),
            })
            .collect();
        basis.sort_unstable();
        LpSolution {
            status,
            objective: lp.objective(&x),
            x,
            duals,
            reduced_costs,
            iterations: self.iterations,
            basis,
            columns_materialized: n,
        }
    }

    fn structural_index(&self, j: usize) -> usize {
        // declared columns come first, generated ones follow in order
        if j < self.n_declared {
            j
        } else {
            j - 2 * self.m
        }
    }
}

/// `|c'x - (b'y + sum_j d_j x_j)|` over columns away from zero, the gap the
/// row duals leave in certifying the objective.
pub fn duality_residual(lp: &LinearProgram, solution: &LpSolution) -> f64 {
    let by: f64 = lp.rhs.iter().zip(&solution.duals).map(|(b, y)| b * y).sum();
    let dx: f64 = solution
        .reduced_costs
        .iter()
        .zip(&solution.x)
        .map(|(d, x)| d * x)
        .sum();
    (solution.objective - by - dx).abs()
}

/// Sign errors of the row duals: a `<=` row must have `y <= 0` when
/// minimizing (`>= 0` when maximizing) and vice versa. Returns the largest
/// violation.
pub fn dual_sign_violation(lp: &LinearProgram, solution: &LpSolution) -> f64 {
    let s = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    lp.relations
        .iter()
        .zip(&solution.duals)
        .map(|(rel, &y)| match rel {
            Relation::LessEq => (s * y).max(0.0),
            Relation::GreaterEq => (-s * y).max(0.0),
            Relation::Equal => 0.0,
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    fn lp_one(sense: Sense, cost: f64, lo: f64, up: f64) -> LinearProgram {
        let mut lp = LinearProgram::new(sense);
        lp.add_var("x".to_string(), cost, lo, up);
        lp
    }

    #[test]
    fn tiny_examples() {
        let mut lp = lp_one(Sense::Minimize, 1.0, f64::NEG_INFINITY, f64::INFINITY);
        let r = lp.add_row("r".to_string(), Relation::GreaterEq, 3.0);
        lp.add_coef(r, 0, 1.0);
        let s = solve(&lp, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.objective - 3.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);

        let mut lp = lp_one(Sense::Minimize, -1.0, f64::NEG_INFINITY, f64::INFINITY);
        let r = lp.add_row("r".to_string(), Relation::GreaterEq, 0.0);
        lp.add_coef(r, 0, 1.0);
        assert_eq!(solve(&lp, &SolverOptions::default()).unwrap().status, LpStatus::Unbounded);

        let mut lp = lp_one(Sense::Minimize, 0.0, f64::NEG_INFINITY, f64::INFINITY);
        let r1 = lp.add_row("a".to_string(), Relation::GreaterEq, 1.0);
        let r2 = lp.add_row("b".to_string(), Relation::LessEq, 0.0);
        lp.add_coef(r1, 0, 1.0);
        lp.add_coef(r2, 0, 1.0);
        assert_eq!(solve(&lp, &SolverOptions::default()).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn no_rows() {
        let lp = lp_one(Sense::Maximize, 2.0, -1.0, 4.0);
        let s = solve(&lp, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![4.0]);
    }

    /// max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, x <= 3.
    #[test]
    fn textbook_maximization() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        lp.add_var("x".into(), 3.0, 0.0, f64::INFINITY);
        lp.add_var("y".into(), 2.0, 0.0, f64::INFINITY);
        let rows = [([1.0, 1.0], 4.0), ([1.0, 3.0], 6.0), ([1.0, 0.0], 3.0)];
        for (k, (a, b)) in rows.iter().enumerate() {
            let r = lp.add_row(format!("r{k}"), Relation::LessEq, *b);
            lp.add_coef(r, 0, a[0]);
            lp.add_coef(r, 1, a[1]);
        }
        let s = solve(&lp, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 11.0).abs() < 1e-12);
        assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!(duality_residual(&lp, &s) < 1e-12);
        assert!(dual_sign_violation(&lp, &s) == 0.0);
        assert_eq!(s.iterations, solve(&lp, &SolverOptions::default()).unwrap().iterations);
    }

    #[test]
    fn bland_pricing_agrees() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        for j in 0..4 {
            lp.add_var(format!("x{j}"), [-10.0, 57.0, 9.0, 24.0][j], 0.0, f64::INFINITY);
        }
        // Beale's cycling example
        let rows = [
            [0.5, -5.5, -2.5, 9.0],
            [0.5, -1.5, -0.5, 1.0],
            [1.0, 0.0, 0.0, 0.0],
        ];
        for (k, (a, b)) in rows.iter().zip([0.0, 0.0, 1.0]).enumerate() {
            let r = lp.add_row(format!("r{k}"), Relation::LessEq, b);
            for j in 0..4 {
                lp.add_coef(r, j, a[j]);
            }
        }
        for pricing in [Pricing::Dantzig, Pricing::Bland] {
            let opts = SolverOptions { pricing, ..SolverOptions::default() };
            let s = solve(&lp, &opts).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!((s.objective + 1.0).abs() < 1e-9, "{pricing:?}: {}", s.objective);
        }
    }

    #[test]
    fn column_generation_with_empty_source() {
        let mut lp = lp_one(Sense::Minimize, 1.0, 0.0, f64::INFINITY);
        let r = lp.add_row("r".into(), Relation::GreaterEq, 2.0);
        lp.add_coef(r, 0, 1.0);
        let mut src = ExplicitColumnSource::new(lp.clone(), 1);
        let s = solve_column_generation(&mut src, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert_eq!(s.columns_materialized, 1);
    }
}
