//! Independent fixed-label L1 program used to brute-force the labeling MILP.
//! Built directly from the assigned classes, with no big-M rows.

#![allow(dead_code)]

use softsense::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use softsense::model::all_pairs;
use softsense::Dataset;

/// Optimal L1 objective of `classes` with coupled SVM rows, offset ordering
/// and parameter boxes, or `None` when infeasible.
pub fn fixed_label_l1(data: &Dataset, classes: &[usize], n_cl: usize, param_bound: f64, slack_cap: f64) -> Option<f64> {
    let n_p = data.n_inputs();
    let mut lp = LinearProgram::new();
    let p: Vec<usize> = (0..n_cl)
        .map(|_| {
            let first = lp.n_vars();
            for _ in 0..=n_p {
                lp.add_var(0.0, -param_bound, param_bound);
            }
            first
        })
        .collect();
    for (i, &c) in classes.iter().enumerate() {
        let t = lp.add_var(1.0, 0.0, f64::INFINITY);
        let x = data.input(i);
        let y = data.outputs()[i];
        for sign in [1.0, -1.0] {
            let mut row = vec![(t, 1.0), (p[c] + n_p, sign)];
            row.extend(x.iter().enumerate().map(|(d, &v)| (p[c] + d, sign * v)));
            lp.add_constraint(row, Sense::Ge, sign * y);
        }
    }
    for (r, s) in all_pairs(n_cl) {
        let w = lp.n_vars();
        for _ in 0..=n_p {
            lp.add_var(0.0, -param_bound, param_bound);
        }
        for d in 0..=n_p {
            lp.add_constraint(vec![(p[r] + d, 1.0), (p[s] + d, -1.0), (w + d, -1.0)], Sense::Eq, 0.0);
        }
        for (i, &c) in classes.iter().enumerate() {
            let sign = if c == r {
                1.0
            } else if c == s {
                -1.0
            } else {
                continue;
            };
            let e = lp.add_var(0.0, 0.0, slack_cap.min(param_bound));
            let mut row = vec![(e, 1.0), (w + n_p, sign)];
            row.extend(data.input(i).iter().enumerate().map(|(d, &v)| (w + d, sign * v)));
            lp.add_constraint(row, Sense::Ge, 1.0);
        }
    }
    for j in 0..n_cl - 1 {
        lp.add_constraint(vec![(p[j] + n_p, 1.0), (p[j + 1] + n_p, -1.0)], Sense::Le, 0.0);
    }
    let sol = solve_lp(&lp).expect("well-formed program");
    (sol.status == LpStatus::Optimal).then_some(sol.objective_value)
}

/// Minimum over every labeling with at least `n_p + 1` points per class.
pub fn brute_force_l1(data: &Dataset, n_cl: usize, param_bound: f64, slack_cap: f64) -> Option<f64> {
    let n = data.len();
    let total = n_cl.pow(n as u32);
    let mut best: Option<f64> = None;
    for code in 0..total {
        let mut c = code;
        let classes: Vec<usize> = (0..n)
            .map(|_| {
                let k = c % n_cl;
                c /= n_cl;
                k
            })
            .collect();
        if (0..n_cl).any(|j| classes.iter().filter(|&&k| k == j).count() < data.n_inputs() + 1) {
            continue;
        }
        if let Some(v) = fixed_label_l1(data, &classes, n_cl, param_bound, slack_cap) {
            if best.is_none_or(|b| v < b) {
                best = Some(v);
            }
        }
    }
    best
}
