//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

#[path = "../../core/tests/common/enumeration.rs"]
mod enumeration;
#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softsense::classify::{kmeans, train_binary_svm, train_multiclass_svm, SvmConfig};
use softsense::design::{build_mis_con_lab_milp, design_mis_con, design_mis_con_lab, DesignConfig, Method};
use softsense::linalg::{lu_solve, DenseMatrix};
use softsense::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use softsense::milp::{solve_milp, MilpLimits, MipStatus};
use softsense::qp::{solve_qp, QpStatus, QuadraticProgram};
use softsense::study::{run_comparison, run_montecarlo, ScenarioConfig, ScenarioKind, Split};
use softsense::{Dataset, LabelingMatrix, SensorModel};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..n {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quiet(cfg: DesignConfig) -> DesignConfig {
    DesignConfig {
        milp_log_interval: 0,
        ..cfg
    }
}

fn milp_instance(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|_| {
            let x: Vec<f64> = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let y = (2.5 * x[0]).cos() * 0.5 + 0.3 * x[1] + rng.gen_range(-0.05..0.05);
            (x, y)
        })
        .collect();
    Dataset::from_rows(&rows).unwrap()
}

fn milp_vs_brute_force() -> Verdict {
    let cfg = quiet(DesignConfig {
        n_cl: 2,
        ..DesignConfig::default()
    });
    let mut worst: f64 = 0.0;
    for seed in 0..25u64 {
        let n = 6 + (seed as usize % 3);
        let data = milp_instance(1000 + seed, n);
        let milp = build_mis_con_lab_milp(&data, &cfg).unwrap();
        let res = solve_milp(milp.program(), MilpLimits::default()).unwrap();
        if res.status != MipStatus::Optimal {
            return verdict(false, format!("instance {seed}: status {:?}", res.status));
        }
        let Some(best) = oracle::brute_force_l1(&data, 2, cfg.param_bound, cfg.slack_cap) else {
            return verdict(false, format!("instance {seed}: oracle found no feasible labeling"));
        };
        worst = worst.max((res.objective_value - best).abs());
    }
    verdict(worst <= 1e-6, format!("25 instances, max |milp - brute force| = {worst:.2e}"))
}

fn lp_vs_vertex_enumeration() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_obj, mut worst_dual) = (0.0f64, 0.0f64);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..200 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(0..=5);
        let c: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-5..=5))).collect();
        let mut rows: Vec<(Vec<f64>, Sense, f64)> = (0..m)
            .map(|_| {
                let a = (0..n).map(|_| f64::from(rng.gen_range(-4..=4))).collect();
                (a, enumeration::sense_of(rng.gen_range(0..3)), f64::from(rng.gen_range(-6..=10)))
            })
            .collect();
        rows.push((vec![1.0; n], Sense::Le, f64::from(rng.gen_range(1..=12))));
        let mut lp = LinearProgram::new();
        for &cj in &c {
            lp.add_var(cj, 0.0, f64::INFINITY);
        }
        for (a, s, b) in &rows {
            lp.add_constraint(a.iter().enumerate().map(|(j, &v)| (j, v)).collect(), *s, *b);
        }
        let sol = solve_lp(&lp).unwrap();
        match enumeration::vertex_enumeration(&c, &rows) {
            None => {
                if sol.status != LpStatus::Infeasible {
                    return verdict(false, format!("case {case}: oracle infeasible, simplex {:?}", sol.status));
                }
                infeasible += 1;
            }
            Some(best) => {
                if sol.status != LpStatus::Optimal {
                    return verdict(false, format!("case {case}: oracle {best}, simplex {:?}", sol.status));
                }
                optimal += 1;
                worst_obj = worst_obj.max((sol.objective_value - best).abs());
                // with only x >= 0 bounds the dual objective is y'b
                let yb: f64 = sol.dual_values.iter().zip(&rows).map(|(y, r)| y * r.2).sum();
                worst_dual = worst_dual.max((sol.objective_value - yb).abs());
            }
        }
    }
    verdict(
        worst_obj <= 1e-6 && worst_dual <= 1e-6,
        format!("{optimal} optimal, {infeasible} infeasible; max objective error {worst_obj:.2e}, max duality gap {worst_dual:.2e}"),
    )
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix<f64> {
    let l: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let mut q = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            q[(a, b)] = (0..n).map(|k| l[k][a] * l[k][b]).sum::<f64>();
        }
        q[(a, a)] += 1.0;
    }
    q
}

fn qp_checks() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_kkt: f64 = 0.0;

    // inequality-constrained, against working-set enumeration
    let mut worst_ineq: f64 = 0.0;
    for case in 0..100 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(0..=3);
        let q = spd(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let rows: Vec<(Vec<f64>, Sense, f64)> = (0..m)
            .map(|_| {
                let a = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                (a, enumeration::sense_of(rng.gen_range(0..2)), rng.gen_range(-2.0..2.0))
            })
            .collect();
        let mut lp = LinearProgram::new();
        for &cj in &c {
            lp.add_var(cj, -2.0, 2.0);
        }
        for (a, s, b) in &rows {
            lp.add_constraint(a.iter().enumerate().map(|(j, &v)| (j, v)).collect(), *s, *b);
        }
        let sol = solve_qp(&QuadraticProgram::new(q.clone(), lp)).unwrap();
        match enumeration::active_set_enumeration(&q, &c, &rows, 2.0) {
            None if sol.status == QpStatus::Infeasible => {}
            Some(best) if sol.status == QpStatus::Optimal => {
                worst_ineq = worst_ineq.max((sol.objective_value - best).abs());
                worst_kkt = worst_kkt.max(sol.kkt_residual);
            }
            oracle => return verdict(false, format!("inequality case {case}: oracle {oracle:?}, solver {:?}", sol.status)),
        }
    }

    // unconstrained: Qx = -c
    let mut worst_free: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let q = spd(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut lp = LinearProgram::new();
        for &cj in &c {
            lp.add_var(cj, f64::NEG_INFINITY, f64::INFINITY);
        }
        let sol = solve_qp(&QuadraticProgram::new(q.clone(), lp)).unwrap();
        let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
        let x = lu_solve(&q, &neg_c).unwrap();
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        worst_free = sol.values.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(worst_free, f64::max);
    }

    // equality-constrained least squares: min |Ax - y|^2 / 2 s.t. Cx = d
    let mut worst_eq: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let rows_a = n + rng.gen_range(1..=4);
        let k = rng.gen_range(1..n);
        let a: Vec<Vec<f64>> = (0..rows_a).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..rows_a).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cm: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let d: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut q = DenseMatrix::zeros(n, n);
        let mut lin = vec![0.0; n];
        for (row, &yi) in a.iter().zip(&y) {
            for u in 0..n {
                lin[u] -= row[u] * yi;
                for v in 0..n {
                    q[(u, v)] += row[u] * row[v];
                }
            }
        }
        let mut lp = LinearProgram::new();
        for &l in &lin {
            lp.add_var(l, f64::NEG_INFINITY, f64::INFINITY);
        }
        for (row, &di) in cm.iter().zip(&d) {
            lp.add_constraint(row.iter().enumerate().map(|(j, &v)| (j, v)).collect(), Sense::Eq, di);
        }
        let sol = solve_qp(&QuadraticProgram::new(q.clone(), lp)).unwrap();
        let mut kkt = DenseMatrix::zeros(n + k, n + k);
        let mut rhs = vec![0.0; n + k];
        for u in 0..n {
            for v in 0..n {
                kkt[(u, v)] = q[(u, v)];
            }
            rhs[u] = -lin[u];
        }
        for (i, row) in cm.iter().enumerate() {
            for j in 0..n {
                kkt[(n + i, j)] = row[j];
                kkt[(j, n + i)] = row[j];
            }
            rhs[n + i] = d[i];
        }
        let x = lu_solve(&kkt, &rhs).unwrap();
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        worst_eq = sol.values.iter().zip(&x[..n]).map(|(a, b)| (a - b).abs()).fold(worst_eq, f64::max);
    }
    verdict(
        worst_kkt <= 1e-6 && worst_free <= 1e-8 && worst_eq <= 1e-7 && worst_ineq <= 1e-6,
        format!(
            "max KKT residual {worst_kkt:.2e}, unconstrained error {worst_free:.2e}, equality LS error {worst_eq:.2e}, inequality objective error {worst_ineq:.2e}"
        ),
    )
}

/// Largest model disagreement over 1000 points per hyperplane, drawn around
/// the point of the plane nearest the unit-box center.
fn boundary_jump(sensor: &SensorModel, rng: &mut ChaCha8Rng) -> f64 {
    let Some(sw) = sensor.switching() else {
        return 0.0;
    };
    let models = sensor.models();
    let mut worst: f64 = 0.0;
    for (h, &(r, s)) in sw.hyperplanes().iter().zip(sw.pairs()) {
        let n = h.w.len();
        let ww = dot(&h.w, &h.w);
        for _ in 0..1000 {
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..1.5)).collect();
            let t = (dot(&h.w, &x) + h.b) / ww;
            for (xi, wi) in x.iter_mut().zip(&h.w) {
                *xi -= t * wi;
            }
            worst = worst.max((models[r].eval(&x) - models[s].eval(&x)).abs());
        }
    }
    worst
}

fn continuity(sensors: &[SensorModel]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let worst = sensors.iter().map(|s| boundary_jump(s, &mut rng)).fold(0.0, f64::max);
    verdict(
        !sensors.is_empty() && worst <= 1e-6,
        format!("{} coupled sensors, max jump on a switching plane {worst:.2e}", sensors.len()),
    )
}

fn dominance(sensors: &mut Vec<SensorModel>) -> Verdict {
    let (mut solved, mut skipped) = (0, 0);
    let mut margin = f64::INFINITY;
    for (n_total, n_cl) in [(16, 2), (20, 3)] {
        for seed in 0..10 {
            let scenario = ScenarioConfig {
                n_total,
                seed,
                ..ScenarioConfig::default()
            };
            let train = softsense::study::generate_scenario(&scenario).unwrap().train;
            let cfg = quiet(DesignConfig {
                n_cl,
                ..DesignConfig::default()
            });
            let report = match design_mis_con_lab(&train, &cfg) {
                Ok(r) => r,
                Err(e) => return verdict(false, format!("n_total {n_total} seed {seed}: {e}")),
            };
            sensors.push(report.sensor.clone());
            let stats = report.stats.milp.expect("labeling stats");
            if stats.status != MipStatus::Optimal || stats.gap > 1e-6 {
                skipped += 1;
                continue;
            }
            solved += 1;
            let km = kmeans(&train, n_cl, cfg.seed, cfg.kmeans_restarts).unwrap().labels;
            let km_obj = permutations(n_cl)
                .iter()
                .filter_map(|perm| {
                    let classes: Vec<usize> = km.classes().iter().map(|&c| perm[c]).collect();
                    oracle::fixed_label_l1(&train, &classes, n_cl, cfg.param_bound, cfg.slack_cap)
                })
                .fold(f64::INFINITY, f64::min);
            if stats.objective > km_obj + 1e-6 {
                return verdict(
                    false,
                    format!("n_total {n_total} seed {seed}: milp {} above k-means {km_obj}", stats.objective),
                );
            }
            margin = margin.min(km_obj - stats.objective);
        }
    }
    verdict(
        solved > 0,
        format!("{solved} instances solved to gap, {skipped} not; smallest k-means minus milp {margin:.2e}"),
    )
}

fn clustered_table(sensors: &mut Vec<SensorModel>) -> Verdict {
    let mut cfg = quiet(DesignConfig::default());
    cfg.milp_limits.node_cap = 1000;
    cfg.milp_limits.time_limit_s = 300.0;
    let mut test = [Vec::new(), Vec::new()];
    let mut train = [Vec::new(), Vec::new()];
    for seed in 0..10 {
        let scenario = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let cmp = run_comparison(&scenario, &Method::ALL, &cfg).unwrap();
        for row in &cmp.table.rows {
            let (Some(tr), Some(te)) = (row.train_rmse, row.test_rmse) else {
                return verdict(false, format!("seed {seed}: {} failed: {:?}", row.method, row.error));
            };
            match row.method {
                Method::Sis => test[0].push(te),
                Method::MisStd => {
                    test[1].push(te);
                    train[0].push(tr);
                }
                Method::MisConLab => train[1].push(tr),
                Method::MisCon => {}
            }
        }
        sensors.extend(
            cmp.sensors
                .into_iter()
                .filter(|(m, _)| matches!(m, Method::MisCon | Method::MisConLab))
                .map(|(_, s)| s),
        );
    }
    let [sis_test, std_test] = test.map(median);
    let [std_train, lab_train] = train.map(median);
    let ratio = sis_test / std_test;
    verdict(
        ratio >= 3.0 && lab_train <= std_train,
        format!(
            "median test sis/mis-std = {sis_test:.4}/{std_test:.4} = {ratio:.2}; median train mis-con-lab {lab_train:.4} vs mis-std {std_train:.4}"
        ),
    )
}

fn uniform_montecarlo() -> Verdict {
    let scenario = ScenarioConfig {
        kind: ScenarioKind::Uniform,
        n_total: 30,
        ..ScenarioConfig::default()
    };
    let mut cfg = quiet(DesignConfig::default());
    cfg.milp_limits.node_cap = 1000;
    let runs = 30;
    let report = run_montecarlo(&scenario, runs, &Method::ALL, &cfg, None).unwrap();
    let (mut complete, mut sis_worst) = (0, 0);
    let mut runner_up = [0usize; 4];
    for run in 0..runs {
        let test: Vec<(Method, f64)> = report
            .records
            .iter()
            .filter(|r| r.run == run && r.split == Split::Test)
            .map(|r| (r.method, r.rmse))
            .collect();
        if test.len() != Method::ALL.len() {
            continue;
        }
        complete += 1;
        let worst = test.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        if worst == Method::Sis {
            sis_worst += 1;
        } else {
            runner_up[Method::ALL.iter().position(|&m| m == worst).unwrap()] += 1;
        }
    }
    let share = sis_worst as f64 / complete.max(1) as f64;
    let others: Vec<String> = Method::ALL
        .iter()
        .zip(runner_up)
        .filter(|(_, c)| *c > 0)
        .map(|(m, c)| format!("{m} {c}"))
        .collect();
    verdict(
        complete == runs && share >= 0.9,
        format!(
            "sis worst in {sis_worst}/{complete} complete runs ({:.0}%); worst otherwise: {}",
            100.0 * share,
            if others.is_empty() { "none".into() } else { others.join(", ") }
        ),
    )
}

fn exact_recovery(sensors: &mut Vec<SensorModel>) -> Verdict {
    let p1 = [0.8, -0.3];
    let b1 = 0.1;
    let w = [1.0, 0.5];
    let bw = -0.7;
    let p2 = [p1[0] - w[0], p1[1] - w[1]];
    let b2 = b1 - bw;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = Vec::new();
    let mut classes = Vec::new();
    while rows.len() < 40 {
        let x = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let side = dot(&w, &x) + bw;
        let (class, y) = if side >= 0.0 { (0, dot(&p1, &x) + b1) } else { (1, dot(&p2, &x) + b2) };
        rows.push((x, y));
        classes.push(class);
    }
    let data = Dataset::from_rows(&rows).unwrap();
    let labels = LabelingMatrix::new(classes, 2).unwrap();
    let report = match design_mis_con(&data, &labels, &quiet(DesignConfig::default())) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let m = report.sensor.models();
    let err = [(&m[0], &p1, b1), (&m[1], &p2, b2)]
        .iter()
        .flat_map(|(got, p, b)| got.p.iter().zip(p.iter()).map(|(x, y)| (x - y).abs()).chain([(got.b - b).abs()]))
        .fold(0.0, f64::max);
    sensors.push(report.sensor);
    verdict(err <= 1e-6, format!("max parameter error {err:.2e}"))
}

fn separable_svm() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = SvmConfig::default();
    let (mut worst_slack, mut misclassified, mut points) = (0.0f64, 0, 0);
    for _ in 0..20 {
        let n_p = rng.gen_range(2..=4);
        let mut normal: Vec<f64> = (0..n_p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = dot(&normal, &normal).sqrt();
        normal.iter_mut().for_each(|v| *v /= len);
        let mut rows = Vec::new();
        let mut classes = Vec::new();
        while rows.len() < 30 {
            let x: Vec<f64> = (0..n_p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let side = dot(&normal, &x) - 0.1;
            // geometric half-gap 0.4, so the hard-margin multipliers stay below gamma
            if side.abs() < 0.4 {
                continue;
            }
            classes.push(usize::from(side < 0.0));
            rows.push((x, 0.0));
        }
        if !classes.contains(&0) || !classes.contains(&1) {
            continue;
        }
        let data = Dataset::from_rows(&rows).unwrap();
        let labels = LabelingMatrix::new(classes.clone(), 2).unwrap();
        let (h, slacks) = train_binary_svm(&data, &labels, &cfg).unwrap();
        worst_slack = slacks.iter().copied().fold(worst_slack, f64::max);
        for (i, &c) in classes.iter().enumerate() {
            points += 1;
            if (h.eval(data.input(i)) >= 0.0) != (c == 0) {
                misclassified += 1;
            }
        }
    }
    // three well separated groups through the one-vs-one vote
    let centers = [[0.0, 0.0], [3.0, 0.0], [1.5, 3.0]];
    let mut rows = Vec::new();
    let mut classes = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..10 {
            rows.push((center.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect(), 0.0));
            classes.push(c);
        }
    }
    let data = Dataset::from_rows(&rows).unwrap();
    let sw = train_multiclass_svm(&data, &LabelingMatrix::new(classes.clone(), 3).unwrap(), &cfg).unwrap();
    for (i, &c) in classes.iter().enumerate() {
        points += 1;
        if sw.assign_region(data.input(i)) != c {
            misclassified += 1;
        }
    }
    verdict(
        worst_slack <= 1e-6 && misclassified == 0,
        format!("{points} points, {misclassified} misclassified, max slack {worst_slack:.2e}"),
    )
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_softsense"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("run.toml");
    std::fs::write(
        &manifest,
        "runs = 4\njobs = 2\n\n[scenario]\nkind = \"uniform\"\nn_total = 24\nseed = 11\n\n[design]\nrecord_timing = false\n\n[design.milp_limits]\nnode_cap = 300\n",
    )
    .unwrap();
    let cfg = manifest.to_str().unwrap();
    let mut checked = Vec::new();
    for command in ["compare", "montecarlo"] {
        let out = dir.path().join(command);
        let mut outputs = Vec::new();
        for _ in 0..2 {
            if out.exists() {
                std::fs::remove_dir_all(&out).unwrap();
            }
            if let Err(e) = run_cli(&["--config", cfg, command], &out) {
                return verdict(false, format!("{command} failed: {e}"));
            }
            outputs.push(snapshot(&out));
        }
        if outputs[0] != outputs[1] {
            let differing: Vec<&str> = outputs[0]
                .iter()
                .zip(&outputs[1])
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.0.as_str())
                .collect();
            return verdict(false, format!("{command} outputs differ: {differing:?}"));
        }
        checked.extend(outputs[0].iter().map(|f| format!("{command}/{}", f.0)));
    }
    verdict(true, format!("byte-identical: {}", checked.join(", ")))
}

/// Arguments, if any, are the criterion numbers to run.
fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut coupled = Vec::new();
    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let mut check = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if !only.is_empty() && !only.contains(&id) {
            return;
        }
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {name:<26} {} ({:.1} s) {}",
            if v.pass { "PASS" } else { "FAIL" },
            secs,
            v.detail
        );
        results.push((id, name, v, secs));
    };
    check(1, "milp vs brute force", &mut milp_vs_brute_force);
    check(2, "lp vs vertex enumeration", &mut lp_vs_vertex_enumeration);
    check(3, "qp kkt and oracles", &mut qp_checks);
    check(5, "labeling dominance", &mut || dominance(&mut coupled));
    check(6, "clustered comparison", &mut || clustered_table(&mut coupled));
    check(7, "uniform monte carlo", &mut uniform_montecarlo);
    check(8, "exact recovery", &mut || exact_recovery(&mut coupled));
    check(9, "separable svm", &mut separable_svm);
    check(10, "determinism", &mut determinism);
    check(4, "continuity", &mut || continuity(&coupled));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing: {failed:?}");
        std::process::exit(1);
    }
}
