//! Finite linear programs in column form.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// +1 for minimization, -1 for maximization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Relation {
    LessEq,
    Equal,
    GreaterEq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Contiguous range of variables sharing a role (e.g. all `yask` columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub var_names: Vec<String>,
    pub costs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Sparse columns: `(row, coefficient)`, sorted by row.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub row_names: Vec<String>,
    pub relations: Vec<Relation>,
    pub rhs: Vec<f64>,
    pub blocks: Vec<VarBlock>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            var_names: Vec::new(),
            costs: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            columns: Vec::new(),
            row_names: Vec::new(),
            relations: Vec::new(),
            rhs: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn add_var(&mut self, name: String, cost: f64, lower: f64, upper: f64) -> usize {
        self.var_names.push(name);
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.columns.push(Vec::new());
        self.costs.len() - 1
    }

    pub fn add_row(&mut self, name: String, relation: Relation, rhs: f64) -> usize {
        self.row_names.push(name);
        self.relations.push(relation);
        self.rhs.push(rhs);
        self.rhs.len() - 1
    }

    /// Adds `value` to the coefficient of `var` in `row`. Rows must be added
    /// in increasing order per column for the sorted-column invariant.
    pub fn add_coef(&mut self, row: usize, var: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let col = &mut self.columns[var];
        match col.last_mut() {
            Some((r, v)) if *r == row => *v += value,
            _ => {
                col.push((row, value));
                if col.len() > 1 && col[col.len() - 2].0 > row {
                    col.sort_by_key(|e| e.0);
                }
            }
        }
    }

    /// Opens a named block starting at the next variable; close it with
    /// [`Self::end_block`].
    pub fn begin_block(&mut self, name: &str) {
        self.blocks.push(VarBlock {
            name: String::from(name),
            start: self.n_vars(),
            len: 0,
        });
    }

    pub fn end_block(&mut self) {
        let n = self.n_vars();
        if let Some(b) = self.blocks.last_mut() {
            b.len = n - b.start;
        }
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.row_names.iter().position(|n| n == name)
    }

    /// Rejects non-finite coefficients, crossed bounds and bad row indices.
    pub fn validate(&self) -> Result<()> {
        let m = self.n_rows();
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        for (j, col) in self.columns.iter().enumerate() {
            if !self.costs[j].is_finite() {
                return bad(alloc::format!("cost of {} is not finite", self.var_names[j]));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return bad(alloc::format!("bounds of {} are invalid", self.var_names[j]));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return bad(alloc::format!("bounds of {} are invalid", self.var_names[j]));
            }
            for &(r, v) in col {
                if r >= m || !v.is_finite() {
                    return bad(alloc::format!("coefficient of {} in row {r} is invalid", self.var_names[j]));
                }
            }
        }
        if let Some(i) = self.rhs.iter().position(|b| !b.is_finite()) {
            return bad(alloc::format!("right-hand side of {} is not finite", self.row_names[i]));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// `A x` per row.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.n_rows()];
        for (col, &v) in self.columns.iter().zip(x) {
            if v != 0.0 {
                for &(r, a) in col {
                    act[r] += a * v;
                }
            }
        }
        act
    }

    /// Largest bound or row violation of `x`, each row measured relative to
    /// `1 + |rhs|`.
    pub fn primal_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.n_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (i, a) in self.row_activity(x).into_iter().enumerate() {
            let diff = a - self.rhs[i];
            let v = match self.relations[i] {
                Relation::LessEq => diff.max(0.0),
                Relation::GreaterEq => (-diff).max(0.0),
                Relation::Equal => diff.abs(),
            };
            worst = worst.max(v / (1.0 + self.rhs[i].abs()));
        }
        worst
    }

    /// `c_j - sum_i y_i a_ij`.
    pub fn reduced_costs(&self, duals: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .zip(&self.costs)
            .map(|(col, c)| c - col.iter().map(|&(r, a)| duals[r] * a).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Values of the structural columns (declared, then generated).
    pub x: Vec<f64>,
    /// Row duals `y` with `objective = b'y + sum_j d_j x_j` over nonbasic
    /// columns at nonzero bounds, where `d = c - A'y`.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    /// Basic variables: structural `j` as `j`, slack of row `i` as
    /// `x.len() + i`, a leftover artificial of row `i` as `x.len() + m + i`.
    pub basis: Vec<usize>,
    /// Columns the solver held at the end (all of them for a plain solve).
    pub columns_materialized: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
