//! Best-bound-first branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{Basis, LinearProgram, LpError, LpSolution, LpSolver, LpStatus};

const INTEGRALITY_TOL: f64 = 1e-6;
const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("malformed mixed-integer program: {0}")]
    Malformed(String),
    #[error("the LP relaxation is unbounded")]
    Unbounded,
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedIntegerProgram {
    pub base: LinearProgram,
    binary_vars: Vec<usize>,
}

impl MixedIntegerProgram {
    /// Marks `binary_vars` as binary and clamps their bounds to `[0, 1]`.
    pub fn new(mut base: LinearProgram, binary_vars: Vec<usize>) -> Result<Self, MilpError> {
        base.validate()?;
        let mut sorted = binary_vars.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(MilpError::Malformed("duplicate binary index".into()));
        }
        if let Some(&j) = sorted.iter().find(|&&j| j >= base.n_vars()) {
            return Err(MilpError::Malformed(format!("binary index {j} out of range")));
        }
        for &j in &binary_vars {
            base.lower[j] = base.lower[j].max(0.0).ceil();
            base.upper[j] = base.upper[j].min(1.0).floor();
        }
        Ok(Self { base, binary_vars })
    }

    pub fn binary_vars(&self) -> &[usize] {
        &self.binary_vars
    }

    pub fn n_vars(&self) -> usize {
        self.base.n_vars()
    }

    /// Whether `v` satisfies all rows, bounds and integrality within `tol`.
    pub fn is_feasible(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.n_vars()
            && self.base.max_violation(v) <= tol
            && self
                .binary_vars
                .iter()
                .all(|&j| v[j].min(1.0 - v[j]).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MilpLimits {
    pub time_limit_s: f64,
    pub gap_target: f64,
    pub node_cap: usize,
}

impl Default for MilpLimits {
    fn default() -> Self {
        Self {
            time_limit_s: 3600.0,
            gap_target: 1e-6,
            node_cap: 200_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MilpOptions {
    pub limits: MilpLimits,
    /// Known feasible point used as the first incumbent.
    pub initial_solution: Option<Vec<f64>>,
    /// Log a progress line every this many nodes (0 disables).
    pub log_interval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MipStatus {
    /// Gap at or below the target.
    Optimal,
    /// Node cap reached; the incumbent carries the reported gap.
    Feasible,
    Infeasible,
    /// Time limit reached (or node cap before any incumbent was found).
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Limit {
    Time,
    Nodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipResult {
    pub status: MipStatus,
    /// Best incumbent, if any.
    pub values: Option<Vec<f64>>,
    pub objective_value: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
    pub limit_hit: Option<Limit>,
    pub elapsed_s: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: u32,
    status: MipStatus,
    objective_value: Option<f64>,
    best_bound: f64,
    gap: Option<f64>,
    nodes_explored: usize,
    limit_hit: Option<Limit>,
    elapsed_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<&'a [f64]>,
}

impl MipResult {
    pub fn has_incumbent(&self) -> bool {
        self.values.is_some()
    }

    /// Machine-readable final summary.
    pub fn summary_json(&self) -> String {
        let finite = |v: f64| v.is_finite().then_some(v);
        serde_json::to_string_pretty(&Summary {
            schema: 1,
            status: self.status,
            objective_value: finite(self.objective_value),
            best_bound: if self.best_bound.is_finite() { self.best_bound } else { 0.0 },
            gap: finite(self.gap),
            nodes_explored: self.nodes_explored,
            limit_hit: self.limit_hit,
            elapsed_s: self.elapsed_s,
            values: self.values.as_deref(),
        })
        .expect("summary serializes")
    }
}

pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

pub fn solve_milp(prob: &MixedIntegerProgram, limits: MilpLimits) -> Result<MipResult, MilpError> {
    solve_milp_with(
        prob,
        &MilpOptions {
            limits,
            ..MilpOptions::default()
        },
    )
}

struct Node {
    bound: f64,
    id: u64,
    depth: usize,
    /// Fixings of the binaries, in branching order.
    fixings: Rc<Fixings>,
    basis: Option<Rc<Basis>>,
}

/// Persistent list of `(variable, value)` fixings shared between siblings.
struct Fixings {
    var: usize,
    value: f64,
    parent: Option<Rc<Fixings>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound (then older id) ranks higher.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    prob: &'a MixedIntegerProgram,
    solver: LpSolver,
    incumbent: Option<(f64, Vec<f64>)>,
    next_id: u64,
    nodes: usize,
    gap_target: f64,
}

enum Outcome {
    Pruned,
    Integral,
    Branch { var: usize, value: f64, bound: f64, basis: Rc<Basis> },
}

impl Search<'_> {
    fn bounds_for(&self, fixings: &Rc<Fixings>) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.prob.base.lower.clone();
        let mut hi = self.prob.base.upper.clone();
        let mut cur = Some(fixings);
        while let Some(f) = cur {
            if f.var != usize::MAX {
                lo[f.var] = f.value;
                hi[f.var] = f.value;
            }
            cur = f.parent.as_ref();
        }
        (lo, hi)
    }

    fn lp(&self, lo: &[f64], hi: &[f64], basis: Option<&Basis>) -> Result<LpSolution, MilpError> {
        match self.solver.solve(lo, hi, basis) {
            Ok(s) => Ok(s),
            Err(e) if basis.is_some() => {
                log::debug!("warm start failed ({e}); retrying cold");
                Ok(self.solver.solve(lo, hi, None)?)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some((inc, _)) => relative_gap(*inc, bound) <= self.gap_target,
            None => false,
        }
    }

    /// Fixes the binaries of `v` to their rounded values and re-solves, so the
    /// reported incumbent is exactly integral.
    fn polish(&self, v: &[f64]) -> Result<Option<(f64, Vec<f64>)>, MilpError> {
        let mut lo = self.prob.base.lower.clone();
        let mut hi = self.prob.base.upper.clone();
        for &j in self.prob.binary_vars() {
            let r = v[j].round();
            lo[j] = r;
            hi[j] = r;
        }
        let s = self.lp(&lo, &hi, None)?;
        if s.status != LpStatus::Optimal || !self.prob.is_feasible(&s.values, FEASIBILITY_TOL) {
            return Ok(None);
        }
        let mut values = s.values;
        for &j in self.prob.binary_vars() {
            values[j] = values[j].round();
        }
        Ok(Some((s.objective_value, values)))
    }

    fn offer(&mut self, candidate: Option<(f64, Vec<f64>)>) {
        if let Some((obj, v)) = candidate {
            if self.incumbent.as_ref().is_none_or(|(inc, _)| obj < *inc - 1e-12) {
                log::debug!("new incumbent {obj:.9} at node {}", self.nodes);
                self.incumbent = Some((obj, v));
            }
        }
    }

    fn process(&mut self, node: &Node) -> Result<Outcome, MilpError> {
        self.nodes += 1;
        if self.prunable(node.bound) {
            return Ok(Outcome::Pruned);
        }
        let (lo, hi) = self.bounds_for(&node.fixings);
        let sol = self.lp(&lo, &hi, node.basis.as_deref())?;
        match sol.status {
            LpStatus::Infeasible => return Ok(Outcome::Pruned),
            LpStatus::Unbounded => return Err(MilpError::Unbounded),
            LpStatus::Optimal => {}
        }
        let bound = sol.objective_value.max(node.bound);
        if self.prunable(bound) {
            return Ok(Outcome::Pruned);
        }
        let mut branch: Option<(usize, f64, f64)> = None;
        for &j in self.prob.binary_vars() {
            let v = sol.values[j];
            if v.min(1.0 - v) <= INTEGRALITY_TOL {
                continue;
            }
            let dist = (v - 0.5).abs();
            let better = match branch {
                None => true,
                Some((bj, _, bd)) => dist < bd - 1e-12 || ((dist - bd).abs() <= 1e-12 && j < bj),
            };
            if better {
                branch = Some((j, v, dist));
            }
        }
        match branch {
            None => {
                let polished = self.polish(&sol.values)?;
                self.offer(polished);
                Ok(Outcome::Integral)
            }
            Some((var, value, _)) => Ok(Outcome::Branch {
                var,
                value,
                bound,
                basis: Rc::new(sol.basis.expect("optimal LP has a basis")),
            }),
        }
    }

    fn child(&mut self, parent: &Node, var: usize, value: f64, bound: f64, basis: &Rc<Basis>) -> Node {
        self.next_id += 1;
        Node {
            bound,
            id: self.next_id,
            depth: parent.depth + 1,
            fixings: Rc::new(Fixings {
                var,
                value,
                parent: Some(parent.fixings.clone()),
            }),
            basis: Some(basis.clone()),
        }
    }
}

const DIVE_EVERY: usize = 10;

pub fn solve_milp_with(prob: &MixedIntegerProgram, options: &MilpOptions) -> Result<MipResult, MilpError> {
    let start = Instant::now();
    let limits = options.limits;
    let mut search = Search {
        prob,
        solver: LpSolver::new(&prob.base)?,
        incumbent: None,
        next_id: 0,
        nodes: 0,
        gap_target: limits.gap_target,
    };

    if let Some(v0) = &options.initial_solution {
        if prob.is_feasible(v0, FEASIBILITY_TOL) {
            let polished = search.polish(v0)?;
            search.offer(polished);
        } else {
            log::warn!("initial solution rejected: infeasible");
        }
    }

    let root = Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        depth: 0,
        fixings: Rc::new(Fixings {
            var: usize::MAX,
            value: 0.0,
            parent: None,
        }),
        basis: None,
    };
    let mut heap = BinaryHeap::new();
    let mut root_bound = f64::NEG_INFINITY;
    match search.process(&root)? {
        Outcome::Pruned if search.incumbent.is_none() => {
            return Ok(MipResult {
                status: MipStatus::Infeasible,
                values: None,
                objective_value: f64::INFINITY,
                best_bound: f64::INFINITY,
                gap: f64::INFINITY,
                nodes_explored: search.nodes,
                limit_hit: None,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
        }
        Outcome::Pruned | Outcome::Integral => {}
        Outcome::Branch { var, value: _, bound, basis } => {
            root_bound = bound;
            let down = search.child(&root, var, 0.0, bound, &basis);
            let up = search.child(&root, var, 1.0, bound, &basis);
            heap.push(down);
            heap.push(up);
        }
    }

    let mut limit_hit = None;
    let mut last_log = 0;
    while let Some(top) = heap.peek() {
        let best_bound = top.bound;
        if let Some((inc, _)) = &search.incumbent {
            if relative_gap(*inc, best_bound) <= limits.gap_target {
                break;
            }
        }
        if start.elapsed().as_secs_f64() >= limits.time_limit_s {
            limit_hit = Some(Limit::Time);
            break;
        }
        if search.nodes >= limits.node_cap {
            limit_hit = Some(Limit::Nodes);
            break;
        }
        if options.log_interval > 0 && search.nodes >= last_log + options.log_interval {
            last_log = search.nodes;
            let inc = search.incumbent.as_ref().map(|(v, _)| *v);
            log::info!(
                "nodes {} open {} incumbent {} bound {:.9} gap {}",
                search.nodes,
                heap.len(),
                inc.map_or("-".to_string(), |v| format!("{v:.9}")),
                best_bound,
                inc.map_or("-".to_string(), |v| format!("{:.3e}", relative_gap(v, best_bound)))
            );
        }
        let mut node = heap.pop().expect("peeked");
        let dive = search.nodes.is_multiple_of(DIVE_EVERY);
        loop {
            match search.process(&node)? {
                Outcome::Pruned | Outcome::Integral => break,
                Outcome::Branch { var, value, bound, basis } => {
                    let down = search.child(&node, var, 0.0, bound, &basis);
                    let up = search.child(&node, var, 1.0, bound, &basis);
                    if !dive || search.nodes >= limits.node_cap {
                        heap.push(down);
                        heap.push(up);
                        break;
                    }
                    // depth-first toward the nearer rounding
                    let (near, far) = if value >= 0.5 { (up, down) } else { (down, up) };
                    heap.push(far);
                    node = near;
                }
            }
        }
    }

    let open_bound = heap.peek().map_or(f64::INFINITY, |n| n.bound);
    let elapsed_s = start.elapsed().as_secs_f64();
    let nodes_explored = search.nodes;
    Ok(match search.incumbent {
        Some((obj, values)) => {
            let best_bound = open_bound.min(obj).max(root_bound.min(obj));
            let gap = relative_gap(obj, best_bound);
            let status = match limit_hit {
                _ if gap <= limits.gap_target => MipStatus::Optimal,
                Some(Limit::Time) => MipStatus::TimedOut,
                _ => MipStatus::Feasible,
            };
            MipResult {
                status,
                values: Some(values),
                objective_value: obj,
                best_bound,
                gap,
                nodes_explored,
                limit_hit: if status == MipStatus::Optimal { None } else { limit_hit },
                elapsed_s,
            }
        }
        None if limit_hit.is_some() => MipResult {
            status: MipStatus::TimedOut,
            values: None,
            objective_value: f64::INFINITY,
            best_bound: open_bound,
            gap: f64::INFINITY,
            nodes_explored,
            limit_hit,
            elapsed_s,
        },
        None => MipResult {
            status: MipStatus::Infeasible,
            values: None,
            objective_value: f64::INFINITY,
            best_bound: f64::INFINITY,
            gap: f64::INFINITY,
            nodes_explored,
            limit_hit: None,
            elapsed_s,
        },
    })
}
