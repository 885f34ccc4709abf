//! LP and QP results against brute-force enumeration on small random problems.

mod common;

use common::enumeration::{active_set_enumeration, sense_of, vertex_enumeration};
use proptest::prelude::*;
use softsense::linalg::DenseMatrix;
use softsense::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use softsense::qp::{solve_qp, QpStatus, QuadraticProgram};

fn lp_case() -> impl Strategy<Value = (Vec<f64>, Vec<(Vec<f64>, Sense, f64)>)> {
    (1usize..=5, 0usize..=5).prop_flat_map(|(n, m)| {
        let cost = prop::collection::vec(-5i32..=5, n);
        let row = (prop::collection::vec(-4i32..=4, n), 0u8..3, -6i32..=10);
        let rows = prop::collection::vec(row, m);
        (cost, rows, 1i32..=12).prop_map(move |(c, rows, cap)| {
            let c: Vec<f64> = c.into_iter().map(f64::from).collect();
            let mut rows: Vec<(Vec<f64>, Sense, f64)> = rows
                .into_iter()
                .map(|(a, s, b)| (a.into_iter().map(f64::from).collect(), sense_of(s), f64::from(b)))
                .collect();
            // keeps the feasible region bounded
            rows.push((vec![1.0; c.len()], Sense::Le, f64::from(cap)));
            (c, rows)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn lp_matches_vertex_enumeration((c, rows) in lp_case()) {
        let n = c.len();
        let mut lp = LinearProgram::new();
        for &cj in &c {
            lp.add_var(cj, 0.0, f64::INFINITY);
        }
        for (a, s, b) in &rows {
            lp.add_constraint(a.iter().enumerate().map(|(j, &v)| (j, v)).collect(), *s, *b);
        }
        let sol = solve_lp(&lp).unwrap();
        match vertex_enumeration(&c, &rows) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective_value - best).abs() <= 1e-6 * best.abs().max(1.0),
                    "simplex {} vs enumeration {}", sol.objective_value, best);
                prop_assert!(lp.max_violation(&sol.values) <= 1e-7);
                // strong duality, bounds are x >= 0 so d'x vanishes
                let yb: f64 = sol.dual_values.iter().zip(&rows).map(|(y, r)| y * r.2).sum();
                prop_assert!((sol.objective_value - yb).abs() <= 1e-6 * best.abs().max(1.0));
                for (i, (_, s, _)) in rows.iter().enumerate() {
                    let y = sol.dual_values[i];
                    match s {
                        Sense::Le => prop_assert!(y <= 1e-7),
                        Sense::Ge => prop_assert!(y >= -1e-7),
                        Sense::Eq => {}
                    }
                }
                for j in 0..n {
                    prop_assert!(sol.reduced_costs[j] >= -1e-7);
                }
            }
        }
    }
}

fn qp_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<(Vec<f64>, Sense, f64)>)> {
    (1usize..=3, 0usize..=3).prop_flat_map(|(n, m)| {
        let l = prop::collection::vec(prop::collection::vec(-3i32..=3, n), n);
        let c = prop::collection::vec(-6i32..=6, n);
        let row = (prop::collection::vec(-3i32..=3, n), 0u8..2, -4i32..=4);
        (l, c, prop::collection::vec(row, m)).prop_map(|(l, c, rows)| {
            let n = c.len();
            let mut q = vec![vec![0.0; n]; n];
            for a in 0..n {
                for b in 0..n {
                    q[a][b] = (0..n).map(|k| f64::from(l[k][a] * l[k][b])).sum::<f64>();
                }
                q[a][a] += 0.5;
            }
            let rows = rows
                .into_iter()
                .map(|(a, s, b)| (a.into_iter().map(f64::from).collect(), sense_of(s), f64::from(b)))
                .collect();
            (q, c.into_iter().map(f64::from).collect(), rows)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn qp_matches_active_set_enumeration((q, c, rows) in qp_case()) {
        let n = c.len();
        let box_size = 2.0;
        let qm = DenseMatrix::from_rows(&q).unwrap();
        let mut lp = LinearProgram::new();
        for &cj in &c {
            lp.add_var(cj, -box_size, box_size);
        }
        for (a, s, b) in &rows {
            lp.add_constraint(a.iter().enumerate().map(|(j, &v)| (j, v)).collect(), *s, *b);
        }
        let prob = QuadraticProgram::new(qm.clone(), lp.clone());
        let sol = solve_qp(&prob).unwrap();
        match active_set_enumeration(&qm, &c, &rows, box_size) {
            None => prop_assert_eq!(sol.status, QpStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(sol.status, QpStatus::Optimal);
                prop_assert!((sol.objective_value - best).abs() <= 1e-7 * best.abs().max(1.0),
                    "active set {} vs enumeration {}", sol.objective_value, best);
                prop_assert!(lp.max_violation(&sol.values) <= 1e-7);
                prop_assert!(sol.kkt_residual <= 1e-7);
                prop_assert_eq!(sol.values.len(), n);
            }
        }
    }
}
