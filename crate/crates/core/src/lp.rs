//! Linear programming over bounded variables.
//!
//! Bounded-variable revised simplex. Every row `aᵢᵀv {≤,=,≥} bᵢ` gets a logical
//! variable `sᵢ` with `aᵢᵀv + sᵢ = bᵢ`, whose bounds encode the sense. The basis
//! inverse is kept explicitly and refactorized from the kernel of basic
//! structural columns, so the cost of a refactorization depends on the number
//! of basic structurals rather than the number of rows.
//!
//! Phase 1 minimizes the sum of bound violations of the basic variables, so a
//! warm start from any basis (e.g. a branch-and-bound parent whose bounds were
//! tightened) is handled without artificial variables.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{invert, DenseMatrix};

const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex stalled after {0} iterations")]
    Stalled(usize),
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("basis factorization failed")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, v: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * v[j]).sum()
    }

    /// Amount by which `v` violates the row (0 when satisfied).
    pub fn violation(&self, v: &[f64]) -> f64 {
        let act = self.activity(v);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// `min cᵀv` subject to linear rows and per-variable bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn objective_value(&self, v: &[f64]) -> f64 {
        self.objective.iter().zip(v).map(|(c, x)| c * x).sum()
    }

    /// Worst bound or row violation of `v`.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let bounds = v
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&lo, &hi))| (lo - x).max(x - hi).max(0.0))
            .fold(0.0, f64::max);
        self.constraints
            .iter()
            .map(|c| c.violation(v))
            .fold(bounds, f64::max)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors differ in length from the objective".into()));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::Malformed(format!("objective coefficient {j} is not finite")));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has a non-finite rhs")));
            }
            for &(j, a) in &c.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!("row {i} references variable {j}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Fixed-order text dump, one row per line, for cross-checking with
    /// external solvers.
    pub fn to_lp_text(&self) -> String {
        self.to_string()
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

fn fmt_terms(f: &mut fmt::Formatter<'_>, terms: impl Iterator<Item = (usize, f64)>) -> fmt::Result {
    let mut first = true;
    for (j, a) in terms {
        if first {
            write!(f, "{a} x{j}")?;
            first = false;
        } else if a < 0.0 {
            write!(f, " - {} x{j}", -a)?;
        } else {
            write!(f, " + {a} x{j}")?;
        }
    }
    if first {
        f.write_str("0")?;
    }
    Ok(())
}

impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("minimize\n  obj: ")?;
        fmt_terms(
            f,
            self.objective.iter().copied().enumerate().filter(|&(_, c)| c != 0.0),
        )?;
        f.write_str("\nsubject to\n")?;
        for (i, c) in self.constraints.iter().enumerate() {
            write!(f, "  c{i}: ")?;
            fmt_terms(f, c.coeffs.iter().copied())?;
            writeln!(f, " {} {}", c.sense, c.rhs)?;
        }
        f.write_str("bounds\n")?;
        for j in 0..self.n_vars() {
            writeln!(f, "  {} <= x{j} <= {}", fmt_bound(self.lower[j]), fmt_bound(self.upper[j]))?;
        }
        f.write_str("end\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable sitting at zero.
    Free,
}

/// Status of every structural variable followed by every row's logical
/// variable. Used to warm start a related problem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Row multipliers `y` with `c = Aᵀy + d`.
    pub dual_values: Vec<f64>,
    /// Reduced costs `d` of the structural variables.
    pub reduced_costs: Vec<f64>,
    pub basis: Option<Basis>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Defaults to `50·(n_v + n_constraints)` when `None`.
    pub max_iterations: Option<usize>,
    /// Degenerate pivots tolerated before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            bland_after: 1000,
        }
    }
}

pub fn solve_lp(prob: &LinearProgram) -> Result<LpSolution, LpError> {
    LpSolver::new(prob)?.solve(&prob.lower, &prob.upper, None)
}

pub fn solve_lp_warm(prob: &LinearProgram, warm: &Basis) -> Result<LpSolution, LpError> {
    LpSolver::new(prob)?.solve(&prob.lower, &prob.upper, Some(warm))
}

/// Column-oriented copy of a linear program, reusable across solves that only
/// change the structural bounds (as branch-and-bound does).
#[derive(Debug, Clone)]
pub struct LpSolver {
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    slack_lo: Vec<f64>,
    slack_hi: Vec<f64>,
    empty_row_infeasible: bool,
    options: LpOptions,
}

impl LpSolver {
    pub fn new(prob: &LinearProgram) -> Result<Self, LpError> {
        prob.validate()?;
        let n = prob.n_vars();
        let m = prob.n_constraints();
        let mut cols = vec![Vec::new(); n];
        let mut slack_lo = Vec::with_capacity(m);
        let mut slack_hi = Vec::with_capacity(m);
        let mut empty_row_infeasible = false;
        for (i, c) in prob.constraints.iter().enumerate() {
            // merge duplicate entries
            let mut merged: Vec<(usize, f64)> = c.coeffs.clone();
            merged.sort_by_key(|&(j, _)| j);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(merged.len());
            for (j, a) in merged {
                match row.last_mut() {
                    Some((lj, la)) if *lj == j => *la += a,
                    _ => row.push((j, a)),
                }
            }
            row.retain(|&(_, a)| a != 0.0);
            if row.is_empty() {
                let ok = match c.sense {
                    Sense::Le => c.rhs >= -FEAS_TOL,
                    Sense::Ge => c.rhs <= FEAS_TOL,
                    Sense::Eq => c.rhs.abs() <= FEAS_TOL,
                };
                empty_row_infeasible |= !ok;
            }
            for (j, a) in row {
                cols[j].push((i, a));
            }
            let (lo, hi) = match c.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            slack_lo.push(lo);
            slack_hi.push(hi);
        }
        Ok(Self {
            n,
            m,
            cols,
            cost: prob.objective.clone(),
            rhs: prob.constraints.iter().map(|c| c.rhs).collect(),
            slack_lo,
            slack_hi,
            empty_row_infeasible,
            options: LpOptions::default(),
        })
    }

    pub fn with_options(mut self, options: LpOptions) -> Self {
        self.options = options;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    /// Solves with the given structural bounds, optionally warm started.
    pub fn solve(
        &self,
        lower: &[f64],
        upper: &[f64],
        warm: Option<&Basis>,
    ) -> Result<LpSolution, LpError> {
        if lower.len() != self.n || upper.len() != self.n {
            return Err(LpError::Malformed("bound vectors of the wrong length".into()));
        }
        if let Some(j) = (0..self.n).find(|&j| lower[j] > upper[j]) {
            log::trace!("variable {j} has crossed bounds");
            return Ok(self.infeasible());
        }
        if self.empty_row_infeasible {
            return Ok(self.infeasible());
        }
        let mut lo = lower.to_vec();
        lo.extend_from_slice(&self.slack_lo);
        let mut hi = upper.to_vec();
        hi.extend_from_slice(&self.slack_hi);

        let mut state = match warm {
            Some(b) => State::warm(self, lo.clone(), hi.clone(), b)
                .or_else(|_| State::cold(self, lo.clone(), hi.clone()))?,
            None => State::cold(self, lo, hi)?,
        };
        state.run(self)
    }

    fn infeasible(&self) -> LpSolution {
        LpSolution {
            status: LpStatus::Infeasible,
            values: vec![0.0; self.n],
            objective_value: f64::INFINITY,
            dual_values: vec![0.0; self.m],
            reduced_costs: vec![0.0; self.n],
            basis: None,
            iterations: 0,
        }
    }

    fn column(&self, j: usize) -> ColumnIter<'_> {
        if j < self.n {
            ColumnIter::Structural(self.cols[j].iter())
        } else {
            ColumnIter::Unit(Some(j - self.n))
        }
    }
}

enum ColumnIter<'a> {
    Structural(std::slice::Iter<'a, (usize, f64)>),
    Unit(Option<usize>),
}

impl Iterator for ColumnIter<'_> {
    type Item = (usize, f64);
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColumnIter::Structural(it) => it.next().copied(),
            ColumnIter::Unit(i) => i.take().map(|i| (i, 1.0)),
        }
    }
}

struct State {
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    /// Variable in each basis position.
    head: Vec<usize>,
    /// Basis position of each variable, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    /// Row-major `B⁻¹`, indexed `[position][row]`.
    binv: Vec<f64>,
    iterations: usize,
    degenerate: usize,
    bland: bool,
}

fn nonbasic_start(lo: f64, hi: f64) -> (VarStatus, f64) {
    if lo.is_finite() && (!hi.is_finite() || lo.abs() <= hi.abs()) {
        (VarStatus::AtLower, lo)
    } else if hi.is_finite() {
        (VarStatus::AtUpper, hi)
    } else {
        (VarStatus::Free, 0.0)
    }
}

impl State {
    fn cold(lp: &LpSolver, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, LpError> {
        let (n, m) = (lp.n, lp.m);
        let mut status = Vec::with_capacity(n + m);
        let mut x = Vec::with_capacity(n + m);
        for j in 0..n {
            let (s, v) = nonbasic_start(lo[j], hi[j]);
            status.push(s);
            x.push(v);
        }
        status.extend(std::iter::repeat_n(VarStatus::Basic, m));
        x.extend(std::iter::repeat_n(0.0, m));
        let head: Vec<usize> = (n..n + m).collect();
        let mut pos = vec![usize::MAX; n + m];
        for (p, &j) in head.iter().enumerate() {
            pos[j] = p;
        }
        let mut s = Self {
            lo,
            hi,
            x,
            status,
            head,
            pos,
            binv: Vec::new(),
            iterations: 0,
            degenerate: 0,
            bland: false,
        };
        s.refactor(lp)?;
        Ok(s)
    }

    fn warm(lp: &LpSolver, lo: Vec<f64>, hi: Vec<f64>, basis: &Basis) -> Result<Self, LpError> {
        let (n, m) = (lp.n, lp.m);
        if basis.status.len() != n + m {
            return Err(LpError::Singular);
        }
        let head: Vec<usize> = (0..n + m)
            .filter(|&j| basis.status[j] == VarStatus::Basic)
            .collect();
        if head.len() != m {
            return Err(LpError::Singular);
        }
        let mut pos = vec![usize::MAX; n + m];
        for (p, &j) in head.iter().enumerate() {
            pos[j] = p;
        }
        let mut status = basis.status.clone();
        let mut x = vec![0.0; n + m];
        for j in 0..n + m {
            if status[j] == VarStatus::Basic {
                continue;
            }
            let (l, h) = (lo[j], hi[j]);
            let (st, v) = match status[j] {
                VarStatus::AtLower if l.is_finite() => (VarStatus::AtLower, l),
                VarStatus::AtUpper if h.is_finite() => (VarStatus::AtUpper, h),
                _ => nonbasic_start(l, h),
            };
            status[j] = st;
            x[j] = v;
        }
        let mut s = Self {
            lo,
            hi,
            x,
            status,
            head,
            pos,
            binv: Vec::new(),
            iterations: 0,
            degenerate: 0,
            bland: false,
        };
        s.refactor(lp)?;
        Ok(s)
    }

    /// Rebuilds `B⁻¹` from the kernel of basic structural columns and
    /// recomputes the basic values.
    fn refactor(&mut self, lp: &LpSolver) -> Result<(), LpError> {
        let (n, m) = (lp.n, lp.m);
        let kernel_cols: Vec<usize> = self.head.iter().copied().filter(|&j| j < n).collect();
        let kernel_rows: Vec<usize> = (0..m)
            .filter(|&i| self.status[n + i] != VarStatus::Basic)
            .collect();
        if kernel_cols.len() != kernel_rows.len() {
            return Err(LpError::Singular);
        }
        let k = kernel_cols.len();
        let mut row_slot = vec![usize::MAX; m];
        for (r, &i) in kernel_rows.iter().enumerate() {
            row_slot[i] = r;
        }
        let mut binv = vec![0.0; m * m];
        if k > 0 {
            let mut kmat = DenseMatrix::<f64>::zeros(k, k);
            for (c, &j) in kernel_cols.iter().enumerate() {
                for &(i, a) in &lp.cols[j] {
                    if row_slot[i] != usize::MAX {
                        kmat[(row_slot[i], c)] = a;
                    }
                }
            }
            let kinv = invert(&kmat).map_err(|_| LpError::Singular)?;
            for (c, &j) in kernel_cols.iter().enumerate() {
                let p = self.pos[j];
                for (r, &i) in kernel_rows.iter().enumerate() {
                    binv[p * m + i] = kinv[(c, r)];
                }
                // basic logicals of the rows touched by column j
                for &(i, a) in &lp.cols[j] {
                    if row_slot[i] == usize::MAX {
                        let q = self.pos[n + i];
                        for (r, &ri) in kernel_rows.iter().enumerate() {
                            binv[q * m + ri] -= a * kinv[(c, r)];
                        }
                    }
                }
            }
        }
        for i in 0..m {
            if row_slot[i] == usize::MAX {
                let q = self.pos[n + i];
                binv[q * m + i] = 1.0;
            }
        }
        self.binv = binv;
        self.recompute_basics(lp);
        Ok(())
    }

    fn recompute_basics(&mut self, lp: &LpSolver) {
        let (n, m) = (lp.n, lp.m);
        let mut r = lp.rhs.clone();
        for j in 0..n + m {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                for (i, a) in lp.column(j) {
                    r[i] -= a * self.x[j];
                }
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            self.x[self.head[p]] = row.iter().zip(&r).map(|(b, v)| b * v).sum();
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        (self.lo[j] - v).max(v - self.hi[j]).max(0.0)
    }

    fn tol(&self, bound: f64) -> f64 {
        FEAS_TOL * (1.0 + bound.abs())
    }

    fn is_below(&self, j: usize) -> bool {
        self.x[j] < self.lo[j] - self.tol(self.lo[j])
    }

    fn is_above(&self, j: usize) -> bool {
        self.x[j] > self.hi[j] + self.tol(self.hi[j])
    }

    /// Cost vector over basis positions for the current phase.
    fn basic_costs(&self, lp: &LpSolver, phase1: bool) -> Vec<f64> {
        self.head
            .iter()
            .map(|&j| {
                if phase1 {
                    if self.is_below(j) {
                        -1.0
                    } else if self.is_above(j) {
                        1.0
                    } else {
                        0.0
                    }
                } else if j < lp.n {
                    lp.cost[j]
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn duals(&self, m: usize, cb: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; m];
        for (p, &c) in cb.iter().enumerate() {
            if c != 0.0 {
                for (yi, b) in y.iter_mut().zip(&self.binv[p * m..(p + 1) * m]) {
                    *yi += c * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, lp: &LpSolver, j: usize, y: &[f64], phase1: bool) -> f64 {
        let c = if phase1 || j >= lp.n { 0.0 } else { lp.cost[j] };
        c - lp.column(j).map(|(i, a)| y[i] * a).sum::<f64>()
    }

    /// Entering variable and direction (+1 increase, −1 decrease).
    fn price(&self, lp: &LpSolver, y: &[f64], phase1: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..lp.n + lp.m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(lp, j, y, phase1);
            let dir = match st {
                VarStatus::AtLower if d < -DUAL_TOL => 1.0,
                VarStatus::AtUpper if d > DUAL_TOL => -1.0,
                VarStatus::Free if d.abs() > DUAL_TOL => -d.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| d.abs() > s) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ftran(&self, lp: &LpSolver, q: usize) -> Vec<f64> {
        let m = lp.m;
        let mut alpha = vec![0.0; m];
        for (i, a) in lp.column(q) {
            for (p, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[p * m + i] * a;
            }
        }
        alpha
    }

    fn run(&mut self, lp: &LpSolver) -> Result<LpSolution, LpError> {
        let (n, m) = (lp.n, lp.m);
        let cap = self.options_cap(lp);
        let mut since_refactor = 0;
        let mut verified = false;
        loop {
            if self.iterations >= cap {
                return Err(LpError::Stalled(self.iterations));
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor(lp)?;
                since_refactor = 0;
            }
            let phase1 = self.head.iter().any(|&j| self.is_below(j) || self.is_above(j));
            let cb = self.basic_costs(lp, phase1);
            let y = self.duals(m, &cb);
            let Some((q, dir)) = self.price(lp, &y, phase1) else {
                if !verified {
                    // confirm on a fresh factorization before declaring the result
                    self.refactor(lp)?;
                    since_refactor = 0;
                    verified = true;
                    continue;
                }
                if phase1 {
                    return Ok(self.finish(lp, LpStatus::Infeasible, &y));
                }
                return Ok(self.finish(lp, LpStatus::Optimal, &y));
            };
            verified = false;
            let alpha = self.ftran(lp, q);
            match self.ratio_test(q, dir, &alpha, phase1) {
                Step::Unbounded => {
                    if phase1 {
                        // cannot happen for an improving phase 1 direction
                        return Err(LpError::Singular);
                    }
                    return Ok(self.finish(lp, LpStatus::Unbounded, &y));
                }
                Step::Flip(theta) => {
                    self.apply_step(q, dir, theta, &alpha);
                    self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.count_pivot(theta, lp);
                }
                Step::Pivot { position, theta, to_upper } => {
                    self.apply_step(q, dir, theta, &alpha);
                    let leaving = self.head[position];
                    self.x[leaving] = if to_upper { self.hi[leaving] } else { self.lo[leaving] };
                    self.status[leaving] = if to_upper { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.pos[leaving] = usize::MAX;
                    self.head[position] = q;
                    self.pos[q] = position;
                    self.status[q] = VarStatus::Basic;
                    self.update_inverse(m, position, &alpha);
                    since_refactor += 1;
                    self.count_pivot(theta, lp);
                }
            }
            self.iterations += 1;
            let _ = n;
        }
    }

    fn options_cap(&self, lp: &LpSolver) -> usize {
        lp.options
            .max_iterations
            .unwrap_or(50 * (lp.n + lp.m).max(1))
    }

    fn count_pivot(&mut self, theta: f64, lp: &LpSolver) {
        if theta < 1e-12 {
            self.degenerate += 1;
            if self.degenerate > lp.options.bland_after && !self.bland {
                log::debug!("switching to Bland's rule after {} degenerate pivots", self.degenerate);
                self.bland = true;
            }
        }
    }

    fn apply_step(&mut self, q: usize, dir: f64, theta: f64, alpha: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for (p, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                self.x[self.head[p]] -= dir * theta * a;
            }
        }
    }

    fn update_inverse(&mut self, m: usize, r: usize, alpha: &[f64]) {
        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        pivot_row.iter_mut().for_each(|v| *v /= piv);
        for (p, &a) in alpha.iter().enumerate() {
            if p == r || a == 0.0 {
                continue;
            }
            let row = if p < r {
                &mut before[p * m..(p + 1) * m]
            } else {
                let off = (p - r - 1) * m;
                &mut after[off..off + m]
            };
            for (v, &pr) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= a * pr;
            }
        }
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], phase1: bool) -> Step {
        // candidate: (position, exact ratio, relaxed ratio, leaves at upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for (p, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.head[p];
            let rate = -dir * a;
            let v = self.x[j];
            let (lo, hi) = (self.lo[j], self.hi[j]);
            let below = self.is_below(j);
            let above = self.is_above(j);
            if rate < 0.0 {
                if below && phase1 {
                    continue;
                }
                let (target, upper) = if above { (hi, true) } else { (lo, false) };
                if target.is_finite() {
                    let exact = ((v - target) / -rate).max(0.0);
                    let relaxed = (v - target + self.tol(target)) / -rate;
                    cands.push((p, exact, relaxed, upper));
                }
            } else {
                if above && phase1 {
                    continue;
                }
                let (target, upper) = if below { (lo, false) } else { (hi, true) };
                if target.is_finite() {
                    let exact = ((target - v) / rate).max(0.0);
                    let relaxed = (target - v + self.tol(target)) / rate;
                    cands.push((p, exact, relaxed, upper));
                }
            }
        }
        let own_range = self.hi[q] - self.lo[q];

        if self.bland {
            let best = cands.iter().fold(None::<(usize, f64, bool)>, |acc, &(p, ex, _, up)| match acc {
                Some((_, bex, _)) if ex > bex + 1e-12 => acc,
                Some((bp, bex, _)) if (ex - bex).abs() <= 1e-12 && self.head[bp] < self.head[p] => acc,
                _ => Some((p, ex, up)),
            });
            return match best {
                Some((_, ex, _)) if own_range.is_finite() && own_range <= ex => Step::Flip(own_range),
                Some((p, ex, up)) => Step::Pivot { position: p, theta: ex, to_upper: up },
                None if own_range.is_finite() => Step::Flip(own_range),
                None => Step::Unbounded,
            };
        }

        // Harris two-pass ratio test
        let theta_max = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        if own_range.is_finite() && own_range <= theta_max {
            return Step::Flip(own_range);
        }
        if theta_max == f64::INFINITY {
            return Step::Unbounded;
        }
        let mut chosen: Option<(usize, f64, bool)> = None;
        let mut best_pivot = 0.0;
        for &(p, ex, _, up) in &cands {
            if ex <= theta_max && alpha[p].abs() > best_pivot {
                best_pivot = alpha[p].abs();
                chosen = Some((p, ex, up));
            }
        }
        let (p, ex, up) = chosen.expect("some candidate attains the relaxed minimum");
        Step::Pivot { position: p, theta: ex, to_upper: up }
    }

    fn finish(&self, lp: &LpSolver, status: LpStatus, y: &[f64]) -> LpSolution {
        let n = lp.n;
        let values: Vec<f64> = self.x[..n].to_vec();
        let objective_value = match status {
            LpStatus::Optimal => lp.cost.iter().zip(&values).map(|(c, v)| c * v).sum(),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        let (dual_values, reduced_costs) = if status == LpStatus::Optimal {
            (
                y.to_vec(),
                (0..n).map(|j| self.reduced_cost(lp, j, y, false)).collect(),
            )
        } else {
            (vec![0.0; lp.m], vec![0.0; n])
        };
        log::trace!(
            "lp finished: {status:?} after {} iterations (max infeasibility {:e})",
            self.iterations,
            self.head.iter().map(|&j| self.infeasibility(j)).fold(0.0, f64::max)
        );
        LpSolution {
            status,
            values,
            objective_value,
            dual_values,
            reduced_costs,
            basis: Some(Basis {
                status: self.status.clone(),
            }),
            iterations: self.iterations,
        }
    }
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot { position: usize, theta: f64, to_upper: bool },
}
