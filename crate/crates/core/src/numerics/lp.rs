//! Dense two-phase primal simplex with Bland's smallest-index rule.
//!
//! Problems are stated as `maximize c.x` subject to `A x (<=|=|>=) b` and
//! per-variable bounds `lower <= x <= upper` (either side may be infinite).
//! Bounds are folded into nonnegative structural columns before the tableau
//! is built. Phase 1 minimizes the sum of artificials; no big-M constant is
//! involved.

use serde::{Deserialize, Serialize};

use super::{Matrix, Vector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
    /// Safety cap hit; Bland's rule makes this unreachable in exact arithmetic.
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpProblem {
    objective: Vector,
    constraints: Matrix,
    rhs: Vector,
    senses: Vec<ConstraintSense>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LpProblem {
    /// New problem with default bounds `x >= 0`.
    pub fn new(objective: Vector, constraints: Matrix, rhs: Vector, senses: Vec<ConstraintSense>) -> Result<Self> {
        let n = objective.len();
        if constraints.ncols() != n {
            return Err(Error::dim(format!(
                "constraint matrix has {} columns, objective has {n} entries",
                constraints.ncols()
            )));
        }
        if constraints.nrows() != rhs.len() || rhs.len() != senses.len() {
            return Err(Error::dim(format!(
                "{} constraint rows, {} rhs entries, {} senses",
                constraints.nrows(),
                rhs.len(),
                senses.len()
            )));
        }
        if objective
            .iter()
            .chain(constraints.iter())
            .chain(rhs.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("LP data must be finite"));
        }
        Ok(LpProblem {
            objective,
            constraints,
            rhs,
            senses,
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        })
    }

    /// Replace variable bounds. Use `f64::NEG_INFINITY` / `f64::INFINITY` for free sides.
    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = self.objective.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::dim(format!("bounds need {n} entries")));
        }
        if lower.iter().any(|&l| l == f64::INFINITY || l.is_nan())
            || upper.iter().any(|&u| u == f64::NEG_INFINITY || u.is_nan())
        {
            return Err(Error::invalid("lower bounds must be < +inf and upper bounds > -inf"));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective(&self) -> &Vector {
        &self.objective
    }

    pub fn constraints(&self) -> &Matrix {
        &self.constraints
    }

    pub fn rhs(&self) -> &Vector {
        &self.rhs
    }

    pub fn senses(&self) -> &[ConstraintSense] {
        &self.senses
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point when `status` is optimal; last basic point otherwise.
    pub x: Vector,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// x = lower + y
    Shift { col: usize, lower: f64 },
    /// x = upper - y
    Flip { col: usize, upper: f64 },
    /// x = y_pos - y_neg
    Split { pos: usize, neg: usize },
}

struct Tableau {
    width: usize, // columns excluding rhs
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    tol: f64,
    iterations: usize,
    max_iterations: usize,
}

enum Phase {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn price(&mut self, cost: &[f64]) {
        for j in 0..self.width {
            let z: f64 = self
                .rows
                .iter()
                .zip(&self.basis)
                .map(|(row, &b)| cost[b] * row[j])
                .sum();
            self.reduced[j] = z - cost[j];
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, pv) in self.reduced.iter_mut().zip(&pivot_row[..self.width]) {
                *v -= f * pv;
            }
            self.reduced[c] = 0.0;
        }
        let floor = self.tol * 1e-3;
        for row in self.rows.iter_mut() {
            let last = row.len() - 1;
            if row[last].abs() < floor {
                row[last] = 0.0;
            }
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Maximize `cost` over the current basis, only letting `allowed` columns enter.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Phase {
        self.price(cost);
        loop {
            if self.iterations >= self.max_iterations {
                return Phase::Stalled;
            }
            let entering = (0..self.width).find(|&j| allowed[j] && self.reduced[j] < -self.tol);
            let Some(c) = entering else {
                return Phase::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > self.tol {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best || (ratio == best && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return Phase::Unbounded,
            }
        }
    }

    fn value(&self, cost: &[f64]) -> f64 {
        self.basis.iter().enumerate().map(|(i, &b)| cost[b] * self.rhs(i)).sum()
    }
}

/// Solve `p` with feasibility and pivot tolerance `tol`.
pub fn solve_lp(p: &LpProblem, tol: f64) -> LpSolution {
    let n = p.num_vars();
    let fail = |status| LpSolution {
        status,
        x: Vector::zeros(n),
        value: f64::NAN,
        iterations: 0,
    };
    if p.lower.iter().zip(&p.upper).any(|(l, u)| l > u) {
        return fail(LpStatus::Infeasible);
    }

    // Structural columns.
    let mut maps = Vec::with_capacity(n);
    let mut ny = 0;
    let mut box_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        if l.is_finite() {
            maps.push(VarMap::Shift { col: ny, lower: l });
            if u.is_finite() {
                box_rows.push((ny, u - l));
            }
            ny += 1;
        } else if u.is_finite() {
            maps.push(VarMap::Flip { col: ny, upper: u });
            ny += 1;
        } else {
            maps.push(VarMap::Split { pos: ny, neg: ny + 1 });
            ny += 2;
        }
    }

    // Rows in terms of y, with rhs made nonnegative.
    let m = p.num_constraints() + box_rows.len();
    let mut coef = vec![vec![0.0; ny]; m];
    let mut rhs = vec![0.0; m];
    let mut senses = Vec::with_capacity(m);
    for i in 0..p.num_constraints() {
        rhs[i] = p.rhs[i];
        for (j, map) in maps.iter().enumerate() {
            let a = p.constraints[(i, j)];
            if a == 0.0 {
                continue;
            }
            match *map {
                VarMap::Shift { col, lower } => {
                    coef[i][col] += a;
                    rhs[i] -= a * lower;
                }
                VarMap::Flip { col, upper } => {
                    coef[i][col] -= a;
                    rhs[i] -= a * upper;
                }
                VarMap::Split { pos, neg } => {
                    coef[i][pos] += a;
                    coef[i][neg] -= a;
                }
            }
        }
        senses.push(p.senses[i]);
    }
    for (k, &(col, width)) in box_rows.iter().enumerate() {
        let i = p.num_constraints() + k;
        coef[i][col] = 1.0;
        rhs[i] = width;
        senses.push(ConstraintSense::Le);
    }
    for i in 0..m {
        if rhs[i] < 0.0 {
            rhs[i] = -rhs[i];
            coef[i].iter_mut().for_each(|v| *v = -*v);
            senses[i] = match senses[i] {
                ConstraintSense::Le => ConstraintSense::Ge,
                ConstraintSense::Ge => ConstraintSense::Le,
                ConstraintSense::Eq => ConstraintSense::Eq,
            };
        }
    }

    // Slack / surplus / artificial columns.
    let n_slack = senses.iter().filter(|s| **s != ConstraintSense::Eq).count();
    let n_art = senses.iter().filter(|s| **s != ConstraintSense::Le).count();
    let width = ny + n_slack + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (ny, ny + n_slack);
    for i in 0..m {
        let mut row = vec![0.0; width + 1];
        row[..ny].copy_from_slice(&coef[i]);
        row[width] = rhs[i];
        match senses[i] {
            ConstraintSense::Le => {
                row[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            ConstraintSense::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            ConstraintSense::Eq => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }
    let art_start = ny + n_slack;
    let mut tab = Tableau {
        width,
        rows,
        basis,
        reduced: vec![0.0; width],
        tol,
        iterations: 0,
        max_iterations: 50_000usize.max(50 * (m + width)),
    };

    if n_art > 0 {
        let cost1: Vec<f64> = (0..width).map(|j| if j >= art_start { -1.0 } else { 0.0 }).collect();
        let all = vec![true; width];
        if let Phase::Stalled = tab.optimize(&cost1, &all) {
            return LpSolution {
                iterations: tab.iterations,
                ..fail(LpStatus::IterationLimit)
            };
        }
        let scale = rhs.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
        if -tab.value(&cost1) > tol * scale {
            return LpSolution {
                iterations: tab.iterations,
                ..fail(LpStatus::Infeasible)
            };
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                match (0..art_start).find(|&j| tab.rows[i][j].abs() > tol) {
                    Some(j) => {
                        tab.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    let mut cost2 = vec![0.0; width];
    for (j, map) in maps.iter().enumerate() {
        let c = p.objective[j];
        match *map {
            VarMap::Shift { col, .. } => cost2[col] = c,
            VarMap::Flip { col, .. } => cost2[col] = -c,
            VarMap::Split { pos, neg } => {
                cost2[pos] = c;
                cost2[neg] = -c;
            }
        }
    }
    let allowed: Vec<bool> = (0..width).map(|j| j < art_start).collect();
    let phase = tab.optimize(&cost2, &allowed);

    let mut y = vec![0.0; width];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(i);
    }
    let x = Vector::from_iterator(
        n,
        maps.iter().map(|map| match *map {
            VarMap::Shift { col, lower } => lower + y[col],
            VarMap::Flip { col, upper } => upper - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        }),
    );
    let value = p.objective.dot(&x);
    let status = match phase {
        Phase::Optimal => LpStatus::Optimal,
        Phase::Unbounded => LpStatus::Unbounded,
        Phase::Stalled => LpStatus::IterationLimit,
    };
    LpSolution {
        status,
        x,
        value,
        iterations: tab.iterations,
    }
}
