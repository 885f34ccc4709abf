//! Convex quadratic programming by a primal active-set method.
//!
//! A feasible starting vertex comes from the simplex solver. Active variable
//! bounds are handled by fixing variables, so each equality-constrained
//! subproblem only involves the free variables and the active general rows.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, lu_solve, norm_inf, DenseMatrix};
use crate::lp::{LinearProgram, LpError, LpSolver, LpStatus, Sense, VarStatus};

const TIKHONOV: f64 = 1e-9;
const MULTIPLIER_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-12;
const MAX_STATIONARY_TOL: f64 = 1e-6;
const INDEPENDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("malformed quadratic program: {0}")]
    Malformed(String),
    #[error("objective matrix is not positive semidefinite")]
    NotConvex,
    #[error("active set revisited after {0} iterations")]
    Cycle(usize),
    #[error("active-set iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("singular KKT system")]
    Singular,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// `min ½vᵀQv + cᵀv + constant` subject to the rows and bounds of `base`,
/// whose objective holds `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub quadratic: DenseMatrix<f64>,
    pub base: LinearProgram,
    pub constant: f64,
}

impl QuadraticProgram {
    pub fn new(quadratic: DenseMatrix<f64>, base: LinearProgram) -> Self {
        Self {
            quadratic,
            base,
            constant: 0.0,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.base.n_vars()
    }

    pub fn objective_value(&self, v: &[f64]) -> f64 {
        let qv = self.quadratic.matvec(v).expect("dimension checked");
        0.5 * qv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
            + self.base.objective_value(v)
            + self.constant
    }

    fn validate(&self) -> Result<(), QpError> {
        self.base.validate()?;
        let n = self.n_vars();
        let q = &self.quadratic;
        if q.rows() != n || q.cols() != n {
            return Err(QpError::Malformed(format!(
                "{}x{} quadratic term for {n} variables",
                q.rows(),
                q.cols()
            )));
        }
        let scale = norm_inf(q.as_slice()).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-10 * scale {
                    return Err(QpError::Malformed(format!("quadratic term asymmetric at ({i}, {j})")));
                }
            }
        }
        let mut shifted = q.clone();
        for i in 0..n {
            shifted[(i, i)] += 1e-8 * scale;
        }
        if n > 0 && cholesky(&shifted).is_err() {
            return Err(QpError::NotConvex);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub status: QpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Row multipliers `λ` with `Qv + c = Aᵀλ + ν` (zero for inactive rows).
    pub row_multipliers: Vec<f64>,
    /// Bound multipliers `ν` (zero for free variables).
    pub bound_multipliers: Vec<f64>,
    /// `‖Qv + c − Aᵀλ − ν‖∞` with the unregularized `Q`.
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Fix {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
#[derive(Default)]
pub struct QpOptions {
    pub max_iterations: Option<usize>,
}


pub fn solve_qp(prob: &QuadraticProgram) -> Result<QpSolution, QpError> {
    solve_qp_with(prob, QpOptions::default())
}

pub fn solve_qp_with(prob: &QuadraticProgram, options: QpOptions) -> Result<QpSolution, QpError> {
    prob.validate()?;
    let n = prob.n_vars();
    let base = &prob.base;
    let m = base.n_constraints();

    let mut q = prob.quadratic.clone();
    if n > 0 && cholesky(&q).is_err() {
        for i in 0..n {
            q[(i, i)] += TIKHONOV;
        }
    }
    let c = &base.objective;

    // feasible vertex
    let mut feas = base.clone();
    feas.objective = vec![0.0; n];
    let start = LpSolver::new(&feas)?.solve(&base.lower, &base.upper, None)?;
    if start.status != LpStatus::Optimal {
        return Ok(QpSolution {
            status: QpStatus::Infeasible,
            values: vec![0.0; n],
            objective_value: f64::INFINITY,
            row_multipliers: vec![0.0; m],
            bound_multipliers: vec![0.0; n],
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    let mut v = start.values.clone();
    let basis = start.basis.expect("optimal solutions carry a basis");

    let rows: Vec<Vec<f64>> = base
        .constraints
        .iter()
        .map(|con| {
            let mut r = vec![0.0; n];
            for &(j, a) in &con.coeffs {
                r[j] += a;
            }
            r
        })
        .collect();

    // working set: equalities first, then what the vertex has active
    let mut fixed: Vec<Option<Fix>> = vec![None; n];
    let mut work: Vec<usize> = Vec::new();
    let mut span = Span::new(n);
    for j in 0..n {
        if base.lower[j] == base.upper[j] {
            fixed[j] = Some(Fix::Lower);
            span.try_add_unit(j);
        }
    }
    for i in 0..m {
        if base.constraints[i].sense == Sense::Eq && span.try_add(&rows[i]) {
            work.push(i);
        }
    }
    for j in 0..n {
        if fixed[j].is_some() {
            continue;
        }
        let fix = match basis.status[j] {
            VarStatus::AtLower => Some(Fix::Lower),
            VarStatus::AtUpper => Some(Fix::Upper),
            _ => None,
        };
        if let Some(f) = fix {
            if span.try_add_unit(j) {
                fixed[j] = Some(f);
            }
        }
    }
    for i in 0..m {
        if base.constraints[i].sense != Sense::Eq
            && basis.status[n + i] != VarStatus::Basic
            && span.try_add(&rows[i])
        {
            work.push(i);
        }
    }
    for j in 0..n {
        if let Some(f) = fixed[j] {
            v[j] = match f {
                Fix::Lower => base.lower[j],
                Fix::Upper => base.upper[j],
            };
        }
    }

    let cap = options.max_iterations.unwrap_or(20 * (n + m) + 100);
    let mut seen: HashSet<(Vec<(usize, Fix)>, Vec<usize>)> = HashSet::new();
    let mut iterations = 0;
    let mut reached_minimizer = false;
    // relative step size treated as roundoff; loosened when degenerate
    // roundoff steps make the working set repeat
    let mut stationary_tol = 1e-10;
    loop {
        if iterations >= cap {
            return Err(QpError::IterationLimit(cap));
        }
        iterations += 1;
        // fixing a bound can make working rows dependent on the free variables
        let mut span = Span::new(n);
        let eq_rows = (0..m).filter(|&i| base.constraints[i].sense == Sense::Eq);
        let ineq_rows = work.iter().copied().filter(|&i| base.constraints[i].sense != Sense::Eq);
        let candidates: Vec<usize> = eq_rows.chain(ineq_rows).collect();
        work.clear();
        for i in candidates {
            let restricted: Vec<f64> = rows[i]
                .iter()
                .enumerate()
                .map(|(j, &a)| if fixed[j].is_some() { 0.0 } else { a })
                .collect();
            if span.try_add(&restricted) {
                work.push(i);
            }
        }

        let grad: Vec<f64> = q
            .matvec(&v)
            .expect("dimension checked")
            .iter()
            .zip(c)
            .map(|(a, b)| a + b)
            .collect();
        let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
        let (step, lambda) = solve_eqp(&q, &rows, &grad, &free, &work)?;
        let step_norm = norm_inf(&step).max(0.0);
        let v_scale = norm_inf(&v).max(1.0);
        // after an unblocked step, or at a vertex, the point already minimizes
        // over the working set and any remaining step is roundoff
        let pinned = work.len() >= free.len();

        if reached_minimizer || pinned || step_norm <= stationary_tol * v_scale {
            reached_minimizer = false;
            // the objective decreases strictly between stationary points
            let mut key_rows = work.clone();
            key_rows.sort_unstable();
            let key_fixed: Vec<(usize, Fix)> = fixed
                .iter()
                .enumerate()
                .filter_map(|(j, f)| f.map(|f| (j, f)))
                .collect();
            if !seen.insert((key_fixed, key_rows)) {
                if stationary_tol >= MAX_STATIONARY_TOL {
                    return Err(QpError::Cycle(iterations));
                }
                log::debug!("qp working set repeated; loosening the stationarity tolerance");
                stationary_tol *= 100.0;
                seen.clear();
            }
            // multipliers of the working set at the current point
            let mut row_mult = vec![0.0; m];
            for (k, &i) in work.iter().enumerate() {
                row_mult[i] = lambda[k];
            }
            let mut nu = vec![0.0; n];
            for j in 0..n {
                if fixed[j].is_some() {
                    nu[j] = grad[j] - work.iter().map(|&i| row_mult[i] * rows[i][j]).sum::<f64>();
                }
            }
            // most negative signed multiplier among droppable constraints
            let mut worst: Option<(Drop, f64)> = None;
            for &i in &work {
                let signed = match base.constraints[i].sense {
                    Sense::Ge => row_mult[i],
                    Sense::Le => -row_mult[i],
                    Sense::Eq => continue,
                };
                if signed < -MULTIPLIER_TOL && worst.is_none_or(|(_, s)| signed < s) {
                    worst = Some((Drop::Row(i), signed));
                }
            }
            for j in 0..n {
                if base.lower[j] == base.upper[j] {
                    continue;
                }
                let signed = match fixed[j] {
                    Some(Fix::Lower) => nu[j],
                    Some(Fix::Upper) => -nu[j],
                    None => continue,
                };
                if signed < -MULTIPLIER_TOL && worst.is_none_or(|(_, s)| signed < s) {
                    worst = Some((Drop::Bound(j), signed));
                }
            }
            match worst {
                None => {
                    return Ok(finish(prob, v, row_mult, nu, iterations));
                }
                Some((Drop::Row(i), _)) => work.retain(|&k| k != i),
                Some((Drop::Bound(j), _)) => fixed[j] = None,
            }
            continue;
        }

        // longest feasible step along `step`, at most 1
        let step_tol = STEP_TOL * step_norm.max(1.0);
        let mut alpha = 1.0;
        let mut block: Option<Drop> = None;
        let mut block_fix = Fix::Lower;
        for &j in &free {
            let d = step[j];
            if d < -step_tol && base.lower[j].is_finite() {
                let t = ((v[j] - base.lower[j]) / -d).max(0.0);
                if t < alpha {
                    alpha = t;
                    block = Some(Drop::Bound(j));
                    block_fix = Fix::Lower;
                }
            } else if d > step_tol && base.upper[j].is_finite() {
                let t = ((base.upper[j] - v[j]) / d).max(0.0);
                if t < alpha {
                    alpha = t;
                    block = Some(Drop::Bound(j));
                    block_fix = Fix::Upper;
                }
            }
        }
        for (i, con) in base.constraints.iter().enumerate() {
            if con.sense == Sense::Eq || work.contains(&i) {
                continue;
            }
            let ap: f64 = rows[i].iter().zip(&step).map(|(a, b)| a * b).sum();
            let av: f64 = rows[i].iter().zip(&v).map(|(a, b)| a * b).sum();
            let t = match con.sense {
                Sense::Le if ap > step_tol * (1.0 + norm_inf(&rows[i])) => (con.rhs - av) / ap,
                Sense::Ge if ap < -step_tol * (1.0 + norm_inf(&rows[i])) => (av - con.rhs) / -ap,
                _ => continue,
            };
            let t = t.max(0.0);
            if t < alpha {
                alpha = t;
                block = Some(Drop::Row(i));
            }
        }
        for (vj, sj) in v.iter_mut().zip(&step) {
            *vj += alpha * sj;
        }
        match block {
            Some(Drop::Bound(j)) => {
                fixed[j] = Some(block_fix);
                v[j] = match block_fix {
                    Fix::Lower => base.lower[j],
                    Fix::Upper => base.upper[j],
                };
            }
            Some(Drop::Row(i)) => work.push(i),
            None => reached_minimizer = true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Drop {
    Row(usize),
    Bound(usize),
}

/// Solves the equality-constrained step `min ½pᵀQp + gᵀp` with `p` zero on
/// fixed variables and `A_W p = 0`. Returns the step and the multipliers of
/// the working rows, with `Qp + g = A_Wᵀλ` on the free variables.
fn solve_eqp(
    q: &DenseMatrix<f64>,
    rows: &[Vec<f64>],
    grad: &[f64],
    free: &[usize],
    work: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), QpError> {
    let n = grad.len();
    let nf = free.len();
    let nw = work.len();
    let size = nf + nw;
    let mut step = vec![0.0; n];
    if size == 0 {
        return Ok((step, Vec::new()));
    }
    let mut kkt = DenseMatrix::<f64>::zeros(size, size);
    let mut rhs = vec![0.0; size];
    for (a, &ja) in free.iter().enumerate() {
        for (b, &jb) in free.iter().enumerate() {
            kkt[(a, b)] = q[(ja, jb)];
        }
        rhs[a] = -grad[ja];
    }
    for (k, &i) in work.iter().enumerate() {
        for (a, &j) in free.iter().enumerate() {
            let v = rows[i][j];
            kkt[(nf + k, a)] = v;
            kkt[(a, nf + k)] = -v;
        }
    }
    let sol = lu_solve(&kkt, &rhs).map_err(|_| QpError::Singular)?;
    for (a, &j) in free.iter().enumerate() {
        step[j] = sol[a];
    }
    Ok((step, sol[nf..].to_vec()))
}

fn finish(
    prob: &QuadraticProgram,
    v: Vec<f64>,
    row_mult: Vec<f64>,
    nu: Vec<f64>,
    iterations: usize,
) -> QpSolution {
    let n = prob.n_vars();
    let qv = prob.quadratic.matvec(&v).expect("dimension checked");
    let mut resid = vec![0.0; n];
    for j in 0..n {
        resid[j] = qv[j] + prob.base.objective[j] - nu[j];
    }
    for (i, con) in prob.base.constraints.iter().enumerate() {
        if row_mult[i] != 0.0 {
            for &(j, a) in &con.coeffs {
                resid[j] -= row_mult[i] * a;
            }
        }
    }
    QpSolution {
        status: QpStatus::Optimal,
        objective_value: prob.objective_value(&v),
        values: v,
        row_multipliers: row_mult,
        bound_multipliers: nu,
        kkt_residual: norm_inf(&resid),
        iterations,
    }
}

/// Incremental orthonormal basis used to keep the working set linearly
/// independent.
struct Span {
    n: usize,
    basis: Vec<Vec<f64>>,
}

impl Span {
    fn new(n: usize) -> Self {
        Self { n, basis: Vec::new() }
    }

    fn try_add(&mut self, v: &[f64]) -> bool {
        let norm0 = norm_inf(v);
        if norm0 == 0.0 {
            return false;
        }
        let mut r = v.to_vec();
        for _ in 0..2 {
            for b in &self.basis {
                let d: f64 = b.iter().zip(&r).map(|(x, y)| x * y).sum();
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= d * bi;
                }
            }
        }
        let nrm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm <= INDEPENDENCE_TOL * norm0 {
            return false;
        }
        r.iter_mut().for_each(|x| *x /= nrm);
        self.basis.push(r);
        true
    }

    fn try_add_unit(&mut self, j: usize) -> bool {
        let mut e = vec![0.0; self.n];
        e[j] = 1.0;
        self.try_add(&e)
    }
}
