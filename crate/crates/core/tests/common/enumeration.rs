//! Brute-force optima of small LPs and QPs.

#![allow(dead_code)]

use softsense::linalg::{lu_solve, DenseMatrix};
use softsense::lp::Sense;

pub fn sense_of(code: u8) -> Sense {
    match code % 3 {
        0 => Sense::Le,
        1 => Sense::Ge,
        _ => Sense::Eq,
    }
}

/// Every basic solution of `{Ax (sense) b, x >= 0}`; returns the best
/// objective over the feasible ones.
pub fn vertex_enumeration(c: &[f64], rows: &[(Vec<f64>, Sense, f64)]) -> Option<f64> {
    let n = c.len();
    let mut planes: Vec<(Vec<f64>, f64)> = rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let total = planes.len();
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = DenseMatrix::from_rows(&pick.iter().map(|&k| planes[k].0.clone()).collect::<Vec<_>>()).unwrap();
        let b: Vec<f64> = pick.iter().map(|&k| planes[k].1).collect();
        if let Ok(x) = lu_solve(&a, &b) {
            let ok = x.iter().all(|&v| v >= -1e-9)
                && rows.iter().all(|(a, s, b)| {
                    let act: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
                    match s {
                        Sense::Le => act <= b + 1e-9,
                        Sense::Ge => act >= b - 1e-9,
                        Sense::Eq => (act - b).abs() <= 1e-9,
                    }
                });
            if ok {
                let obj: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < total - n + i {
                pick[i] += 1;
                for k in i + 1..n {
                    pick[k] = pick[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Minimum over all working sets of the equality-constrained minimizer,
/// restricted to feasible candidates.
pub fn active_set_enumeration(
    q: &DenseMatrix<f64>,
    c: &[f64],
    rows: &[(Vec<f64>, Sense, f64)],
    box_size: f64,
) -> Option<f64> {
    let n = c.len();
    let mut planes: Vec<(Vec<f64>, f64)> = rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), -box_size));
        planes.push((e, box_size));
    }
    let objective = |x: &[f64]| -> f64 {
        let qx = q.matvec(x).unwrap();
        0.5 * x.iter().zip(&qx).map(|(a, b)| a * b).sum::<f64>() + c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << planes.len()) {
        let act: Vec<usize> = (0..planes.len()).filter(|&k| mask >> k & 1 == 1).collect();
        if act.len() > n {
            continue;
        }
        let size = n + act.len();
        let mut kkt = DenseMatrix::<f64>::zeros(size, size);
        let mut rhs = vec![0.0; size];
        for a in 0..n {
            for b in 0..n {
                kkt[(a, b)] = q[(a, b)];
            }
            rhs[a] = -c[a];
        }
        for (k, &p) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + k, j)] = planes[p].0[j];
                kkt[(j, n + k)] = planes[p].0[j];
            }
            rhs[n + k] = planes[p].1;
        }
        let Ok(sol) = lu_solve(&kkt, &rhs) else { continue };
        let x = &sol[..n];
        let feasible = x.iter().all(|v| v.abs() <= box_size + 1e-9)
            && rows.iter().all(|(a, s, b)| {
                let act: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                match s {
                    Sense::Le => act <= b + 1e-9,
                    Sense::Ge => act >= b - 1e-9,
                    Sense::Eq => (act - b).abs() <= 1e-9,
                }
            });
        if feasible {
            let f = objective(x);
            best = Some(best.map_or(f, |v: f64| v.min(f)));
        }
    }
    best
}
