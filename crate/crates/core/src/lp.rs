//! A small revised-simplex LP solver returning optimal *basic* solutions,
//! plus construction of the per-RSU relaxation used by the rounding step.
//!
//! Problems have the form `max c·x  s.t.  A x <= b, x >= 0` with `b >= 0`,
//! so the all-slack basis is feasible and no phase one is needed. Columns
//! are kept sparse and the basis inverse is held in product form (a file of
//! eta vectors), which keeps the per-pivot cost proportional to the number
//! of nonzeros rather than to rows × columns.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::instance::InstancePool;
use crate::model::{RsuId, TaskId};

/// Pivot eligibility threshold for reduced costs and ratio-test entries.
pub const PIVOT_TOL: f64 = 1e-9;
/// Values within this distance of 0 or 1 are snapped before rounding.
pub const FRACTIONAL_TOL: f64 = 1e-7;

const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: expected {expected} coefficients, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("row {0} has a negative or non-finite right-hand side")]
    NegativeRhs(usize),
    #[error("non-finite coefficient in row {0}")]
    NonFinite(usize),
    #[error("LP is unbounded")]
    Unbounded,
    #[error("simplex did not converge within {0} pivots")]
    IterationLimit(usize),
    #[error("basis became numerically singular")]
    Singular,
    #[error("unknown rsu {0}")]
    UnknownRsu(RsuId),
}

/// One `<=` row, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `max objective·x` subject to `<=` rows and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_dense_row(&mut self, coeffs: &[f64], rhs: f64) -> Result<(), LpError> {
        if coeffs.len() != self.num_vars() {
            return Err(LpError::DimensionMismatch {
                expected: self.num_vars(),
                got: coeffs.len(),
            });
        }
        let sparse = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        self.add_row(sparse, rhs)
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> Result<(), LpError> {
        if let Some(&(j, _)) = coeffs.iter().find(|(j, _)| *j >= self.num_vars()) {
            return Err(LpError::DimensionMismatch {
                expected: self.num_vars(),
                got: j + 1,
            });
        }
        self.constraints.push(Constraint { coeffs, rhs });
        Ok(())
    }

    /// Row activity `a_i·x`.
    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.constraints[row]
            .coeffs
            .iter()
            .map(|&(j, a)| a * x[j])
            .sum()
    }

    fn check(&self) -> Result<(), LpError> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite(usize::MAX));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !(row.rhs >= 0.0) || !row.rhs.is_finite() {
                return Err(LpError::NegativeRhs(i));
            }
            if row.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(LpError::NonFinite(i));
            }
            if let Some(&(j, _)) = row.coeffs.iter().find(|(j, _)| *j >= self.num_vars()) {
                return Err(LpError::DimensionMismatch {
                    expected: self.num_vars(),
                    got: j + 1,
                });
            }
        }
        Ok(())
    }
}

/// An optimal vertex of a [`LinearProgram`].
#[derive(Debug, Clone, PartialEq)]
pub struct BasicSolution {
    /// Structural variable values, all `>= 0`.
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Basic variables, ascending. Indices `>= n` denote the slack of row
    /// `index - n`.
    pub basis: Vec<usize>,
    pub pivots: usize,
}

impl BasicSolution {
    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > FRACTIONAL_TOL).count()
    }

    /// Structural variables strictly between the snapping thresholds.
    pub fn fractional(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| is_fractional(v))
            .map(|(j, _)| j)
            .collect()
    }
}

pub fn is_fractional(v: f64) -> bool {
    (FRACTIONAL_TOL..=1.0 - FRACTIONAL_TOL).contains(&v)
}

/// Snaps near-0/near-1 values and floors the rest.
pub fn floor_snapped(v: f64) -> u32 {
    if v >= 1.0 - FRACTIONAL_TOL {
        (v + FRACTIONAL_TOL).floor() as u32
    } else {
        0
    }
}

struct Eta {
    row: usize,
    pivot: f64,
    /// Off-pivot entries of the transformed entering column.
    entries: Vec<(usize, f64)>,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    /// Variable at each basis position.
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x_b: Vec<f64>,
    etas: Vec<Eta>,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in lp.constraints.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        let mut in_basis = vec![false; n + m];
        in_basis[n..].iter_mut().for_each(|b| *b = true);
        Self {
            lp,
            n,
            m,
            cols,
            basis: (n..n + m).collect(),
            in_basis,
            x_b: lp.constraints.iter().map(|r| r.rhs).collect(),
            etas: Vec::new(),
        }
    }

    fn cost(&self, var: usize) -> f64 {
        if var < self.n {
            self.lp.objective[var]
        } else {
            0.0
        }
    }

    fn column_into(&self, var: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if var < self.n {
            for &(i, a) in &self.cols[var] {
                out[i] = a;
            }
        } else {
            out[var - self.n] = 1.0;
        }
    }

    fn ftran(&self, x: &mut [f64]) {
        for e in &self.etas {
            let xr = x[e.row] / e.pivot;
            x[e.row] = xr;
            if xr != 0.0 {
                for &(i, d) in &e.entries {
                    x[i] -= d * xr;
                }
            }
        }
    }

    fn btran(&self, y: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let mut s = y[e.row];
            for &(i, d) in &e.entries {
                s -= d * y[i];
            }
            y[e.row] = s / e.pivot;
        }
    }

    fn push_eta(&mut self, row: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != row && v.abs() > 1e-14)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta {
            row,
            pivot: alpha[row],
            entries,
        });
    }

    fn reduced_cost(&self, var: usize, y: &[f64]) -> f64 {
        if var < self.n {
            let mut d = self.lp.objective[var];
            for &(i, a) in &self.cols[var] {
                d -= y[i] * a;
            }
            d
        } else {
            -y[var - self.n]
        }
    }

    /// Rebuilds the eta file for the current basis from the slack identity.
    fn refactor(&mut self) -> Result<(), LpError> {
        let mut structurals: Vec<usize> =
            self.basis.iter().copied().filter(|&v| v < self.n).collect();
        structurals.sort_unstable();
        self.etas.clear();
        let mut pos_var: Vec<usize> = (self.n..self.n + self.m).collect();
        let mut alpha = vec![0.0; self.m];
        for q in structurals {
            self.column_into(q, &mut alpha);
            self.ftran(&mut alpha);
            let mut best: Option<(usize, f64)> = None;
            for (r, &v) in alpha.iter().enumerate() {
                let occupant = pos_var[r];
                if occupant >= self.n
                    && !self.in_basis[occupant]
                    && v.abs() > PIVOT_TOL
                    && best.is_none_or(|(_, bv)| v.abs() > bv)
                {
                    best = Some((r, v.abs()));
                }
            }
            let (r, _) = best.ok_or(LpError::Singular)?;
            self.push_eta(r, &alpha);
            pos_var[r] = q;
        }
        self.basis = pos_var;
        let mut x: Vec<f64> = self.lp.constraints.iter().map(|r| r.rhs).collect();
        self.ftran(&mut x);
        for v in &mut x {
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }
        self.x_b = x;
        Ok(())
    }

    fn solve(mut self) -> Result<BasicSolution, LpError> {
        let total = self.n + self.m;
        // Largest-coefficient pricing first; Bland's rule once the budget of
        // such pivots or of degenerate pivots is spent, which rules out cycling.
        let dantzig_budget = 4 * total + 64;
        let degenerate_budget = self.m + 16;
        let max_pivots = 50 * total + 1000;

        let mut y = vec![0.0; self.m];
        let mut alpha = vec![0.0; self.m];
        let mut pivots = 0usize;
        let mut degenerate = 0usize;
        let mut bland = false;

        loop {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.cost(self.basis[i]);
            }
            self.btran(&mut y);

            let mut entering: Option<(usize, f64)> = None;
            for var in 0..total {
                if self.in_basis[var] {
                    continue;
                }
                let d = self.reduced_cost(var, &y);
                if d > PIVOT_TOL {
                    if bland {
                        entering = Some((var, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d > best) {
                        entering = Some((var, d));
                    }
                }
            }
            let Some((q, _)) = entering else { break };

            self.column_into(q, &mut alpha);
            self.ftran(&mut alpha);

            let mut leave: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.x_b[i].max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * best.max(1.0);
                        let better = if tie {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                a > alpha[r]
                            }
                        } else {
                            ratio < best
                        };
                        if better {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let (r, theta) = leave.ok_or(LpError::Unbounded)?;

            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    self.x_b[i] -= theta * a;
                    if self.x_b[i] < 0.0 && self.x_b[i] > -1e-9 {
                        self.x_b[i] = 0.0;
                    }
                }
            }
            self.x_b[r] = theta;
            self.push_eta(r, &alpha);
            self.in_basis[self.basis[r]] = false;
            self.in_basis[q] = true;
            self.basis[r] = q;

            pivots += 1;
            if theta <= 1e-12 {
                degenerate += 1;
            }
            if !bland && (pivots >= dantzig_budget || degenerate >= degenerate_budget) {
                bland = true;
            }
            if pivots >= max_pivots {
                return Err(LpError::IterationLimit(pivots));
            }
            if self.etas.len() >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }

        let mut values = vec![0.0; self.n];
        for (i, &var) in self.basis.iter().enumerate() {
            if var < self.n {
                values[var] = self.x_b[i].max(0.0);
            }
        }
        let objective_value = values
            .iter()
            .zip(&self.lp.objective)
            .map(|(x, c)| x * c)
            .sum();
        let mut basis = self.basis;
        basis.sort_unstable();
        Ok(BasicSolution {
            values,
            objective_value,
            basis,
            pivots,
        })
    }
}

/// Solves the LP to an optimal basic feasible solution.
pub fn solve_lp(lp: &LinearProgram) -> Result<BasicSolution, LpError> {
    lp.check()?;
    Simplex::new(lp).solve()
}

/// The relaxation of the single-RSU selection problem, with the mapping from
/// LP columns back to pool instances.
#[derive(Debug, Clone, PartialEq)]
pub struct RsuLp {
    pub rsu_id: RsuId,
    pub lp: LinearProgram,
    /// Instance id of each LP column.
    pub vars: Vec<usize>,
    /// Task of each multiple-choice row; row `2 + i` belongs to `task_rows[i]`.
    pub task_rows: Vec<TaskId>,
}

/// Builds the RB row, the CU row and one multiple-choice row per task for
/// the instances of `rsu_id` with positive weight.
pub fn build_rsu_lp(pool: &InstancePool, rsu_id: RsuId, weights: &[f64]) -> Result<RsuLp, LpError> {
    let cap = pool.capacity(rsu_id).ok_or(LpError::UnknownRsu(rsu_id))?;
    if weights.len() != pool.len() {
        return Err(LpError::DimensionMismatch {
            expected: pool.len(),
            got: weights.len(),
        });
    }
    let vars: Vec<usize> = pool
        .on_rsu(rsu_id)
        .iter()
        .copied()
        .filter(|&id| weights[id] > 0.0)
        .collect();
    let mut lp = LinearProgram::new(vars.iter().map(|&id| weights[id]).collect());
    let rb_row = vars
        .iter()
        .enumerate()
        .map(|(j, &id)| (j, pool.get(id).rbs as f64))
        .collect();
    let cu_row = vars
        .iter()
        .enumerate()
        .map(|(j, &id)| (j, pool.get(id).cus as f64))
        .collect();
    lp.add_row(rb_row, cap.rbs as f64)?;
    lp.add_row(cu_row, cap.cus as f64)?;
    let mut by_task: BTreeMap<TaskId, Vec<(usize, f64)>> = BTreeMap::new();
    for (j, &id) in vars.iter().enumerate() {
        by_task
            .entry(pool.get(id).task_id)
            .or_default()
            .push((j, 1.0));
    }
    let mut task_rows = Vec::with_capacity(by_task.len());
    for (task, row) in by_task {
        lp.add_row(row, 1.0)?;
        task_rows.push(task);
    }
    Ok(RsuLp {
        rsu_id,
        lp,
        vars,
        task_rows,
    })
}
