//! Sensor design: SIS, MIS-std, MIS-con and MIS-con-lab.
//!
//! All routines work on normalized data and return sensors carrying an
//! identity scaler; attach the data scaler with [`SensorModel::with_scaler`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{kmeans, train_multiclass_svm, SvmConfig};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, DenseMatrix, LinalgError};
use crate::lp::{Basis, LinearProgram, LpSolver, LpStatus, Sense};
use crate::milp::{solve_milp_with, Limit, MilpLimits, MilpOptions, MipStatus, MixedIntegerProgram};
use crate::model::{
    all_pairs, sample_on_hyperplane, AffineModel, Dataset, Hyperplane, LabelingMatrix, Scaler, SensorModel,
    SwitchingLogic,
};
use crate::qp::{solve_qp, QpStatus, QuadraticProgram};

/// Largest tolerated jump across a switching hyperplane.
pub const CONTINUITY_TOL: f64 = 1e-6;
/// Points sampled per hyperplane by the continuity check.
pub const CONTINUITY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sis,
    MisStd,
    MisCon,
    MisConLab,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sis, Method::MisStd, Method::MisCon, Method::MisConLab];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sis => "sis",
            Method::MisStd => "mis-std",
            Method::MisCon => "mis-con",
            Method::MisConLab => "mis-con-lab",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method `{s}`; valid methods: sis, mis-std, mis-con, mis-con-lab")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub n_cl: usize,
    /// SVM slack weight.
    pub gamma: f64,
    /// Big-M constant; derived from `param_bound` when absent.
    pub big_m: Option<f64>,
    /// Box on every model and hyperplane parameter in the labeling MILP.
    pub param_bound: f64,
    /// Upper bound on the SVM slacks of the continuity-coupled programs.
    /// With the default 1 a labeled point never sits strictly on the wrong
    /// side of its hyperplanes; set it to `param_bound` for a looser program.
    pub slack_cap: f64,
    /// Weight of the SVM terms added to the least-squares objective of MIS-con.
    pub regularization_weight: f64,
    pub milp_limits: MilpLimits,
    /// Progress line every this many branch-and-bound nodes (0 disables).
    pub milp_log_interval: usize,
    pub seed: u64,
    pub kmeans_restarts: usize,
    /// Random partitions refined into MILP starting points.
    pub heuristic_restarts: usize,
    /// L1 relabeling rounds per starting point.
    pub heuristic_rounds: usize,
    /// Record wall-clock stage timings. Disable for byte-reproducible reports.
    pub record_timing: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            n_cl: 3,
            gamma: 10.0,
            big_m: None,
            param_bound: 10.0,
            slack_cap: 1.0,
            regularization_weight: 0.0,
            milp_limits: MilpLimits::default(),
            milp_log_interval: 1000,
            seed: 0,
            kmeans_restarts: 10,
            heuristic_restarts: 100,
            heuristic_rounds: 20,
            record_timing: true,
        }
    }
}

/// Smallest big-M that never cuts off a labeling, given the parameter boxes.
pub fn required_big_m(param_bound: f64, n_p: usize) -> f64 {
    2.0 * (param_bound * (n_p as f64 + 1.0) + 1.0)
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{name} must be finite and positive, got {v}")))
            }
        };
        if self.n_cl == 0 {
            return Err(Error::Invalid("n_cl must be at least 1".into()));
        }
        positive("gamma", self.gamma)?;
        positive("param_bound", self.param_bound)?;
        positive("slack_cap", self.slack_cap)?;
        if let Some(m) = self.big_m {
            positive("big_m", m)?;
        }
        if !(self.regularization_weight.is_finite() && self.regularization_weight >= 0.0) {
            return Err(Error::Invalid(format!(
                "regularization_weight must be nonnegative, got {}",
                self.regularization_weight
            )));
        }
        let l = &self.milp_limits;
        if !(l.time_limit_s > 0.0) {
            return Err(Error::Invalid(format!("time limit must be positive, got {}", l.time_limit_s)));
        }
        if !(l.gap_target.is_finite() && l.gap_target >= 0.0) {
            return Err(Error::Invalid(format!("gap target must be nonnegative, got {}", l.gap_target)));
        }
        if l.node_cap == 0 {
            return Err(Error::Invalid("node cap must be at least 1".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Invalid("kmeans_restarts must be at least 1".into()));
        }
        Ok(())
    }

    /// The big-M to use for `n_p` inputs, checked against [`required_big_m`].
    pub fn effective_big_m(&self, n_p: usize) -> Result<f64> {
        let need = required_big_m(self.param_bound, n_p);
        match self.big_m {
            None => Ok(need),
            Some(m) if m >= need => Ok(m),
            Some(m) => Err(Error::Invalid(format!(
                "big_m = {m} is below 2·(param_bound·(n_p+1)+1) = {need}"
            ))),
        }
    }

    fn svm(&self) -> SvmConfig {
        SvmConfig {
            gamma: self.gamma,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpStats {
    pub status: MipStatus,
    /// L1 objective of the returned incumbent.
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub limit_hit: Option<Limit>,
    /// L1 objective of the heuristic incumbent handed to branch-and-bound.
    pub start_objective: Option<f64>,
    pub elapsed_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub milp: Option<MilpStats>,
    /// Largest sampled jump across a switching hyperplane.
    pub continuity_gap: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub method: Method,
    pub sensor: SensorModel<f64>,
    pub train_rmse: f64,
    pub labels_used: LabelingMatrix,
    pub stats: SolverStats,
}

struct Stopwatch {
    enabled: bool,
    timings: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            timings: BTreeMap::new(),
        }
    }

    fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            *self.timings.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        }
        out
    }
}

/// Runs `method`. MIS-con uses `labels` when given and the k-means labeling
/// otherwise.
pub fn design(method: Method, train: &Dataset<f64>, labels: Option<&LabelingMatrix>, cfg: &DesignConfig) -> Result<DesignReport> {
    match method {
        Method::Sis => design_sis(train),
        Method::MisStd => design_mis_std(train, cfg),
        Method::MisCon => match labels {
            Some(z) => design_mis_con(train, z, cfg),
            None => {
                cfg.validate()?;
                let km = kmeans(train, cfg.n_cl, cfg.seed, cfg.kmeans_restarts)?;
                design_mis_con(train, &km.labels, cfg)
            }
        },
        Method::MisConLab => design_mis_con_lab(train, cfg),
    }
}

fn fit_affine(train: &Dataset<f64>, rows: &[usize]) -> std::result::Result<AffineModel<f64>, LinalgError> {
    let n_p = train.n_inputs();
    let a = DenseMatrix::from_fn(rows.len(), n_p + 1, |r, c| if c < n_p { train.input(rows[r])[c] } else { 1.0 });
    let y: Vec<f64> = rows.iter().map(|&i| train.outputs()[i]).collect();
    let theta = least_squares(&a, &y)?;
    Ok(AffineModel::new(theta[..n_p].to_vec(), theta[n_p]))
}

/// One affine model fit by least squares on `[x | 1]`.
pub fn design_sis(train: &Dataset<f64>) -> Result<DesignReport> {
    let mut clock = Stopwatch::new(true);
    let n_p = train.n_inputs();
    if train.len() < n_p + 1 {
        return Err(Error::Invalid(format!(
            "{} rows cannot determine an affine model in {n_p} inputs",
            train.len()
        )));
    }
    let all: Vec<usize> = (0..train.len()).collect();
    let model = clock.time("least-squares", || fit_affine(train, &all))?;
    let sensor = SensorModel::single(model, Scaler::identity(n_p))?;
    let train_rmse = sensor.rmse_on(train)?;
    Ok(DesignReport {
        method: Method::Sis,
        sensor,
        train_rmse,
        labels_used: LabelingMatrix::new(vec![0; train.len()], 1)?,
        stats: SolverStats {
            timings: clock.timings,
            ..SolverStats::default()
        },
    })
}

fn require_rows(train: &Dataset<f64>, n_cl: usize) -> Result<()> {
    let need = n_cl * (train.n_inputs() + 1);
    if train.len() < need {
        return Err(Error::Invalid(format!(
            "{} rows are too few for {n_cl} classes (need {need})",
            train.len()
        )));
    }
    Ok(())
}

/// k-means labeling, one-vs-one SVM switching, then least squares on the
/// points each region actually receives.
pub fn design_mis_std(train: &Dataset<f64>, cfg: &DesignConfig) -> Result<DesignReport> {
    cfg.validate()?;
    if cfg.n_cl == 1 {
        let mut r = design_sis(train)?;
        r.method = Method::MisStd;
        if !cfg.record_timing {
            r.stats.timings.clear();
        }
        return Ok(r);
    }
    require_rows(train, cfg.n_cl)?;
    let mut clock = Stopwatch::new(cfg.record_timing);
    let n = train.len();
    let n_p = train.n_inputs();
    let km = clock.time("kmeans", || kmeans(train, cfg.n_cl, cfg.seed, cfg.kmeans_restarts))?;
    let switching = clock.time("svm", || train_multiclass_svm(train, &km.labels, &cfg.svm()))?;
    let routed: Vec<usize> = (0..n).map(|i| switching.assign_region(train.input(i))).collect();
    let mut notes = Vec::new();
    let all: Vec<usize> = (0..n).collect();
    let models = clock.time("least-squares", || -> Result<Vec<AffineModel<f64>>> {
        let global = fit_affine(train, &all)?;
        let mut models = Vec::with_capacity(cfg.n_cl);
        for j in 0..cfg.n_cl {
            let rows: Vec<usize> = all.iter().copied().filter(|&i| routed[i] == j).collect();
            if rows.len() < n_p + 1 {
                notes.push(format!("region {} received {} points; using the single model", j + 1, rows.len()));
                models.push(global.clone());
                continue;
            }
            match fit_affine(train, &rows) {
                Ok(m) => models.push(m),
                Err(e) => {
                    notes.push(format!("region {} is rank deficient ({e}); using the single model", j + 1));
                    models.push(global.clone());
                }
            }
        }
        Ok(models)
    })?;
    let moved = (0..n).filter(|&i| routed[i] != km.labels.class_of(i)).count();
    if moved > 0 {
        notes.push(format!("{moved} training points route to a region other than their cluster"));
    }
    let sensor = SensorModel::new(models, Some(switching), Scaler::identity(n_p))?;
    let train_rmse = sensor.rmse_on(train)?;
    Ok(DesignReport {
        method: Method::MisStd,
        sensor,
        train_rmse,
        labels_used: LabelingMatrix::new(routed, cfg.n_cl)?,
        stats: SolverStats {
            timings: clock.timings,
            notes,
            ..SolverStats::default()
        },
    })
}

/// Variable layout of the continuity-coupled QP.
struct ConLayout {
    n_p: usize,
    /// First index of `[w_k, b_k]` per pair, `None` for excluded pairs.
    w: Vec<Option<usize>>,
    /// First index of `[p_j, b_j]` per class, `None` for excluded classes.
    p: Vec<Option<usize>>,
}

/// Builds the MIS-con program over the classes in `include`.
fn con_program(train: &Dataset<f64>, labels: &LabelingMatrix, cfg: &DesignConfig, include: &[usize]) -> (QuadraticProgram, ConLayout) {
    let n_p = train.n_inputs();
    let n_cl = labels.n_classes();
    let pairs = all_pairs(n_cl);
    let mut lp = LinearProgram::new();
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let mut w = vec![None; pairs.len()];
    for (k, &(r, s)) in pairs.iter().enumerate() {
        if include.contains(&r) && include.contains(&s) {
            w[k] = Some(lp.n_vars());
            for _ in 0..=n_p {
                lp.add_var(0.0, free.0, free.1);
            }
        }
    }
    let mut p = vec![None; n_cl];
    for &j in include {
        p[j] = Some(lp.n_vars());
        for _ in 0..=n_p {
            lp.add_var(0.0, free.0, free.1);
        }
    }
    let rho = cfg.regularization_weight;
    for (k, &(r, s)) in pairs.iter().enumerate() {
        let Some(wk) = w[k] else { continue };
        for (class, sign) in [(r, 1.0), (s, -1.0)] {
            for i in labels.members(class) {
                let e = lp.add_var(rho * cfg.gamma, 0.0, cfg.slack_cap);
                let mut coeffs: Vec<(usize, f64)> = train.input(i).iter().enumerate().map(|(c, &x)| (wk + c, sign * x)).collect();
                coeffs.push((wk + n_p, sign));
                coeffs.push((e, 1.0));
                lp.add_constraint(coeffs, Sense::Ge, 1.0);
            }
        }
        let (pr, ps) = (p[r].expect("included"), p[s].expect("included"));
        for c in 0..=n_p {
            lp.add_constraint(vec![(pr + c, 1.0), (ps + c, -1.0), (wk + c, -1.0)], Sense::Eq, 0.0);
        }
    }
    let nv = lp.n_vars();
    let mut q = DenseMatrix::zeros(nv, nv);
    let mut constant = 0.0;
    for &j in include {
        let pj = p[j].expect("included");
        for i in labels.members(j) {
            let mut a = train.input(i).to_vec();
            a.push(1.0);
            let y = train.outputs()[i];
            for (u, &au) in a.iter().enumerate() {
                lp.objective[pj + u] -= 2.0 * y * au;
                for (v, &av) in a.iter().enumerate() {
                    q[(pj + u, pj + v)] += 2.0 * au * av;
                }
            }
            constant += y * y;
        }
    }
    if rho > 0.0 {
        for wk in w.iter().flatten() {
            for c in 0..n_p {
                q[(wk + c, wk + c)] += rho;
            }
        }
    }
    let mut prob = QuadraticProgram::new(q, lp);
    prob.constant = constant;
    (prob, ConLayout { n_p, w, p })
}

fn subsets(n_cl: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n_cl, size, &mut Vec::new(), &mut out);
    out
}

/// Names the smallest group of classes whose coupled constraints conflict.
fn diagnose_infeasible(train: &Dataset<f64>, labels: &LabelingMatrix, cfg: &DesignConfig) -> Error {
    for size in 2..=labels.n_classes().min(3) {
        for group in subsets(labels.n_classes(), size) {
            let (prob, _) = con_program(train, labels, cfg, &group);
            let feasible = LpSolver::new(&LinearProgram {
                objective: vec![0.0; prob.base.n_vars()],
                ..prob.base.clone()
            })
            .and_then(|s| s.solve(&prob.base.lower, &prob.base.upper, None))
            .map(|s| s.status == LpStatus::Optimal)
            .unwrap_or(true);
            if !feasible {
                let names: Vec<String> = group.iter().map(|c| (c + 1).to_string()).collect();
                let what = if size == 2 { "pair" } else { "triple" };
                return Error::Invalid(format!(
                    "continuity-coupled program infeasible: the constraints of class {what} ({}) conflict",
                    names.join(",")
                ));
            }
        }
    }
    Error::Invalid("continuity-coupled program infeasible for the given labels".into())
}

/// Rebuilds the hyperplanes from the model differences, nudging any pair of
/// identical slopes apart so every normal is valid.
fn coupled_switching(models: &mut [AffineModel<f64>], notes: &mut Vec<String>) -> Result<SwitchingLogic<f64>> {
    let n_cl = models.len();
    let pairs = all_pairs(n_cl);
    for _ in 0..=pairs.len() {
        let mut nudged = false;
        for &(r, s) in &pairs {
            let norm2: f64 = models[r].p.iter().zip(&models[s].p).map(|(a, b)| (a - b) * (a - b)).sum();
            if norm2.sqrt() <= 1e-12 {
                models[r].p[0] = models[s].p[0] + 1e-9;
                notes.push(format!(
                    "models {} and {} have equal slopes; separated by 1e-9 along the first input",
                    r + 1,
                    s + 1
                ));
                nudged = true;
            }
        }
        if !nudged {
            break;
        }
    }
    let planes = pairs
        .iter()
        .map(|&(r, s)| {
            let w: Vec<f64> = models[r].p.iter().zip(&models[s].p).map(|(a, b)| a - b).collect();
            Hyperplane::new(w, models[r].b - models[s].b)
        })
        .collect::<Result<Vec<_>>>()?;
    SwitchingLogic::new(planes, n_cl)
}

/// Largest jump between the two models of every hyperplane, sampled on the
/// hyperplane itself.
pub fn continuity_gap(sensor: &SensorModel<f64>, seed: u64) -> f64 {
    let Some(sw) = sensor.switching() else {
        return 0.0;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (k, h) in sw.hyperplanes().iter().enumerate() {
        let pts = sample_on_hyperplane(h, CONTINUITY_SAMPLES, &mut rng);
        worst = worst.max(sensor.boundary_gap(k, &pts));
    }
    worst
}

fn check_continuity(sensor: &SensorModel<f64>, seed: u64) -> Result<f64> {
    let Some(sw) = sensor.switching() else {
        return Ok(0.0);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (k, h) in sw.hyperplanes().iter().enumerate() {
        let pts = sample_on_hyperplane(h, CONTINUITY_SAMPLES, &mut rng);
        let gap = sensor.boundary_gap(k, &pts);
        if gap > CONTINUITY_TOL {
            return Err(Error::Discontinuous { hyperplane: k, gap });
        }
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Joint least-squares fit and SVM-constrained switching with the continuity
/// coupling `p_r − p_s = w_k`, `b_r − b_s = b_k`, for fixed labels.
pub fn design_mis_con(train: &Dataset<f64>, labels: &LabelingMatrix, cfg: &DesignConfig) -> Result<DesignReport> {
    cfg.validate()?;
    if labels.n_rows() != train.len() {
        return Err(Error::Dimension(format!("{} labels for {} rows", labels.n_rows(), train.len())));
    }
    if labels.n_classes() < 2 {
        return Err(Error::Invalid("mis-con needs at least two classes".into()));
    }
    labels.require_nonempty()?;
    let mut clock = Stopwatch::new(cfg.record_timing);
    let n_cl = labels.n_classes();
    let all: Vec<usize> = (0..n_cl).collect();
    let (prob, layout) = con_program(train, labels, cfg, &all);
    let sol = clock.time("qp", || solve_qp(&prob))?;
    if sol.status != QpStatus::Optimal {
        return Err(diagnose_infeasible(train, labels, cfg));
    }
    let n_p = layout.n_p;
    let mut models: Vec<AffineModel<f64>> = layout
        .p
        .iter()
        .map(|pj| {
            let pj = pj.expect("all classes included");
            AffineModel::new(sol.values[pj..pj + n_p].to_vec(), sol.values[pj + n_p])
        })
        .collect();
    debug_assert!(layout.w.iter().all(Option::is_some));
    let mut notes = Vec::new();
    if sol.kkt_residual > 1e-6 {
        notes.push(format!("qp KKT residual {:.3e}", sol.kkt_residual));
    }
    let switching = coupled_switching(&mut models, &mut notes)?;
    if n_cl >= 3 {
        for t in subsets(n_cl, 3) {
            let (a, b, c) = (t[0] + 1, t[1] + 1, t[2] + 1);
            notes.push(format!("coupling implies w({a},{c}) = w({a},{b}) + w({b},{c})"));
        }
    }
    let sensor = SensorModel::new(models, Some(switching), Scaler::identity(n_p))?;
    let gap = clock.time("continuity-check", || check_continuity(&sensor, cfg.seed))?;
    let moved = (0..train.len())
        .filter(|&i| sensor.region(train.input(i)) != labels.class_of(i))
        .count();
    if moved > 0 {
        notes.push(format!("{moved} training points route to a region other than their label"));
    }
    let train_rmse = sensor.rmse_on(train)?;
    Ok(DesignReport {
        method: Method::MisCon,
        sensor,
        train_rmse,
        labels_used: labels.clone(),
        stats: SolverStats {
            timings: clock.timings,
            milp: None,
            continuity_gap: Some(gap),
            notes,
        },
    })
}

/// The big-M labeling MILP together with its variable layout.
#[derive(Debug, Clone)]
pub struct LabelingMilp {
    program: MixedIntegerProgram,
    n: usize,
    n_p: usize,
    n_cl: usize,
    w0: usize,
    e0: usize,
    p0: usize,
    t0: usize,
    z0: usize,
}

impl LabelingMilp {
    pub fn program(&self) -> &MixedIntegerProgram {
        &self.program
    }

    pub fn n_continuous(&self) -> usize {
        self.z0
    }

    pub fn n_binary(&self) -> usize {
        self.n * self.n_cl
    }

    /// `[w_k, b_k]` starts here.
    pub fn w_var(&self, k: usize) -> usize {
        self.w0 + k * (self.n_p + 1)
    }

    pub fn e_var(&self, k: usize, i: usize) -> usize {
        self.e0 + k * self.n + i
    }

    /// `[p_j, b_j]` starts here.
    pub fn p_var(&self, j: usize) -> usize {
        self.p0 + j * (self.n_p + 1)
    }

    pub fn t_var(&self, i: usize) -> usize {
        self.t0 + i
    }

    pub fn z_var(&self, i: usize, j: usize) -> usize {
        self.z0 + i * self.n_cl + j
    }

    /// Rounds the binaries of a solution to a labeling.
    pub fn labels_from(&self, values: &[f64]) -> Result<LabelingMatrix> {
        let classes = (0..self.n)
            .map(|i| {
                (0..self.n_cl)
                    .max_by(|&a, &b| values[self.z_var(i, a)].total_cmp(&values[self.z_var(i, b)]).then(b.cmp(&a)))
                    .expect("n_cl >= 1")
            })
            .collect();
        LabelingMatrix::new(classes, self.n_cl)
    }

    pub fn models_from(&self, values: &[f64]) -> Vec<AffineModel<f64>> {
        (0..self.n_cl)
            .map(|j| {
                let pj = self.p_var(j);
                AffineModel::new(values[pj..pj + self.n_p].to_vec(), values[pj + self.n_p])
            })
            .collect()
    }

    /// Optimal L1 objective with the binaries fixed to `labels`, or `None`
    /// when the labeling is infeasible.
    pub fn evaluate_labeling(&self, solver: &LpSolver, labels: &LabelingMatrix) -> Result<Option<(f64, Vec<f64>)>> {
        self.evaluate_warm(solver, labels, &mut None)
    }

    /// Like [`Self::evaluate_labeling`] but over every renaming of the
    /// classes, since the offset ordering admits only some of them.
    pub fn evaluate_labeling_any_order(&self, solver: &LpSolver, labels: &LabelingMatrix) -> Result<Option<(f64, Vec<f64>)>> {
        self.evaluate_any_order_warm(solver, labels, &mut None)
    }

    fn evaluate_warm(&self, solver: &LpSolver, labels: &LabelingMatrix, warm: &mut Option<Basis>) -> Result<Option<(f64, Vec<f64>)>> {
        let base = &self.program.base;
        let mut lo = base.lower.clone();
        let mut hi = base.upper.clone();
        for i in 0..self.n {
            for j in 0..self.n_cl {
                let v = f64::from(labels.z(i, j));
                lo[self.z_var(i, j)] = v;
                hi[self.z_var(i, j)] = v;
            }
        }
        let s = solver.solve(&lo, &hi, warm.as_ref())?;
        if s.basis.is_some() {
            warm.clone_from(&s.basis);
        }
        Ok((s.status == LpStatus::Optimal).then_some((s.objective_value, s.values)))
    }

    fn evaluate_any_order_warm(
        &self,
        solver: &LpSolver,
        labels: &LabelingMatrix,
        warm: &mut Option<Basis>,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for perm in permutations(self.n_cl) {
            let relabeled = labels.permuted(&perm)?;
            if let Some((obj, v)) = self.evaluate_warm(solver, &relabeled, warm)? {
                if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                    best = Some((obj, v));
                }
            }
        }
        Ok(best)
    }
}

impl LabelingMilp {
    /// Same optimum as [`Self::evaluate_labeling`], solved on the program with
    /// only the rows the labeling activates, then lifted to a full MILP point.
    fn evaluate_reduced(&self, train: &Dataset<f64>, labels: &LabelingMatrix) -> Result<Option<(f64, Vec<f64>)>> {
        let base = &self.program.base;
        let (n_p, n_cl) = (self.n_p, self.n_cl);
        let mut lp = LinearProgram::new();
        // reduced variable -> full variable
        let mut map = Vec::new();
        let mut add = |lp: &mut LinearProgram, full: usize| {
            map.push(full);
            lp.add_var(base.objective[full], base.lower[full], base.upper[full])
        };
        let p: Vec<usize> = (0..n_cl)
            .map(|j| {
                let first = add(&mut lp, self.p_var(j));
                for c in 1..=n_p {
                    add(&mut lp, self.p_var(j) + c);
                }
                first
            })
            .collect();
        for i in 0..self.n {
            let c = labels.class_of(i);
            let t = add(&mut lp, self.t_var(i));
            let x = train.input(i);
            let y = train.outputs()[i];
            for sign in [1.0, -1.0] {
                let mut row = vec![(t, 1.0), (p[c] + n_p, sign)];
                row.extend(x.iter().enumerate().map(|(d, &v)| (p[c] + d, sign * v)));
                lp.add_constraint(row, Sense::Ge, sign * y);
            }
        }
        for (k, (r, s)) in all_pairs(n_cl).into_iter().enumerate() {
            let w = add(&mut lp, self.w_var(k));
            for c in 1..=n_p {
                add(&mut lp, self.w_var(k) + c);
            }
            for c in 0..=n_p {
                lp.add_constraint(vec![(p[r] + c, 1.0), (p[s] + c, -1.0), (w + c, -1.0)], Sense::Eq, 0.0);
            }
            for i in 0..self.n {
                let c = labels.class_of(i);
                let sign = if c == r {
                    1.0
                } else if c == s {
                    -1.0
                } else {
                    continue;
                };
                let e = add(&mut lp, self.e_var(k, i));
                let mut row = vec![(e, 1.0), (w + n_p, sign)];
                row.extend(train.input(i).iter().enumerate().map(|(d, &v)| (w + d, sign * v)));
                lp.add_constraint(row, Sense::Ge, 1.0);
            }
        }
        for j in 0..n_cl - 1 {
            lp.add_constraint(vec![(p[j] + n_p, 1.0), (p[j + 1] + n_p, -1.0)], Sense::Le, 0.0);
        }
        let sol = crate::lp::solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
        let mut full = vec![0.0; base.n_vars()];
        for (r, &f) in map.iter().enumerate() {
            full[f] = sol.values[r];
        }
        for i in 0..self.n {
            full[self.z_var(i, labels.class_of(i))] = 1.0;
        }
        Ok(Some((sol.objective_value, full)))
    }

    fn evaluate_reduced_any_order(&self, train: &Dataset<f64>, labels: &LabelingMatrix) -> Result<Option<(f64, Vec<f64>)>> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for perm in permutations(self.n_cl) {
            if let Some((obj, v)) = self.evaluate_reduced(train, &labels.permuted(&perm)?)? {
                if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                    best = Some((obj, v));
                }
            }
        }
        Ok(best)
    }
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Epigraph and big-M form of the optimal-labeling problem with the
/// continuity coupling, offset ordering and minimum class sizes.
pub fn build_mis_con_lab_milp(train: &Dataset<f64>, cfg: &DesignConfig) -> Result<LabelingMilp> {
    cfg.validate()?;
    if cfg.n_cl < 2 {
        return Err(Error::Invalid("the labeling MILP needs at least two classes".into()));
    }
    require_rows(train, cfg.n_cl)?;
    let n = train.len();
    let n_p = train.n_inputs();
    let n_cl = cfg.n_cl;
    let pairs = all_pairs(n_cl);
    let big_m = cfg.effective_big_m(n_p)?;
    let pb = cfg.param_bound;

    let mut lp = LinearProgram::new();
    let w0 = lp.n_vars();
    for _ in 0..pairs.len() * (n_p + 1) {
        lp.add_var(0.0, -pb, pb);
    }
    let e0 = lp.n_vars();
    for _ in 0..pairs.len() * n {
        lp.add_var(0.0, 0.0, cfg.slack_cap.min(pb));
    }
    let p0 = lp.n_vars();
    for _ in 0..n_cl * (n_p + 1) {
        lp.add_var(0.0, -pb, pb);
    }
    let t0 = lp.n_vars();
    for _ in 0..n {
        lp.add_var(1.0, 0.0, f64::INFINITY);
    }
    let z0 = lp.n_vars();
    for _ in 0..n * n_cl {
        lp.add_var(0.0, 0.0, 1.0);
    }
    let m = LabelingMilp {
        program: MixedIntegerProgram::new(LinearProgram::new(), Vec::new())?,
        n,
        n_p,
        n_cl,
        w0,
        e0,
        p0,
        t0,
        z0,
    };

    for i in 0..n {
        lp.add_constraint((0..n_cl).map(|j| (m.z_var(i, j), 1.0)).collect(), Sense::Eq, 1.0);
    }
    for i in 0..n {
        let x = train.input(i);
        let y = train.outputs()[i];
        for j in 0..n_cl {
            let pj = m.p_var(j);
            for sign in [1.0, -1.0] {
                // t_i ≥ sign·(y_i − p_jᵀx_i − b_j) − M(1 − z_ij)
                let mut coeffs = vec![(m.t_var(i), 1.0)];
                coeffs.extend(x.iter().enumerate().map(|(c, &v)| (pj + c, sign * v)));
                coeffs.push((pj + n_p, sign));
                coeffs.push((m.z_var(i, j), -big_m));
                lp.add_constraint(coeffs, Sense::Ge, sign * y - big_m);
            }
        }
    }
    for (k, &(r, s)) in pairs.iter().enumerate() {
        let wk = m.w_var(k);
        for i in 0..n {
            let x = train.input(i);
            for (class, sign) in [(r, 1.0), (s, -1.0)] {
                let mut coeffs: Vec<(usize, f64)> = x.iter().enumerate().map(|(c, &v)| (wk + c, sign * v)).collect();
                coeffs.push((wk + n_p, sign));
                coeffs.push((m.e_var(k, i), 1.0));
                coeffs.push((m.z_var(i, class), -big_m));
                lp.add_constraint(coeffs, Sense::Ge, 1.0 - big_m);
            }
        }
        let (pr, ps) = (m.p_var(r), m.p_var(s));
        for c in 0..=n_p {
            lp.add_constraint(vec![(pr + c, 1.0), (ps + c, -1.0), (wk + c, -1.0)], Sense::Eq, 0.0);
        }
    }
    for j in 0..n_cl - 1 {
        lp.add_constraint(
            vec![(m.p_var(j) + n_p, 1.0), (m.p_var(j + 1) + n_p, -1.0)],
            Sense::Le,
            0.0,
        );
    }
    for j in 0..n_cl {
        lp.add_constraint((0..n).map(|i| (m.z_var(i, j), 1.0)).collect(), Sense::Ge, (n_p + 1) as f64);
    }
    let binaries = (z0..z0 + n * n_cl).collect();
    Ok(LabelingMilp {
        program: MixedIntegerProgram::new(lp, binaries)?,
        ..m
    })
}

/// Region of every training point under max-affine routing of `models`.
fn argmax_labels(train: &Dataset<f64>, models: &[AffineModel<f64>]) -> Vec<usize> {
    (0..train.len())
        .map(|i| {
            let x = train.input(i);
            let mut best = 0;
            for j in 1..models.len() {
                if models[j].eval(x) > models[best].eval(x) {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Least-squares max-affine partition refinement: fit each class, relabel by
/// the maximal model, repeat until the labels settle. Returns the last labeling
/// whose classes all hold at least `n_p + 1` points.
fn max_affine_refine(train: &Dataset<f64>, start: Vec<usize>, n_cl: usize) -> Option<Vec<usize>> {
    let min_size = train.n_inputs() + 1;
    let mut labels = start;
    let mut last_valid = None;
    for _ in 0..50 {
        let mut sizes = vec![0; n_cl];
        labels.iter().for_each(|&c| sizes[c] += 1);
        if sizes.iter().any(|&s| s < min_size) {
            break;
        }
        let models: Option<Vec<AffineModel<f64>>> = (0..n_cl)
            .map(|j| {
                let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == j).collect();
                fit_affine(train, &rows).ok()
            })
            .collect();
        let Some(models) = models else { break };
        last_valid = Some(labels.clone());
        let next = argmax_labels(train, &models);
        if next == labels {
            break;
        }
        labels = next;
    }
    last_valid
}

/// Incumbent for branch-and-bound. Starts are the k-means labeling and
/// `heuristic_restarts` random Voronoi partitions, each refined by
/// least-squares max-affine iterations, scored exactly under every class
/// renaming and then relabeled by the maximal L1 model while that helps.
fn heuristic_incumbent(
    milp: &LabelingMilp,
    train: &Dataset<f64>,
    kmeans_labels: &LabelingMatrix,
    cfg: &DesignConfig,
) -> Result<Option<(f64, Vec<f64>)>> {
    let n = train.len();
    let n_cl = cfg.n_cl;
    let min_size = train.n_inputs() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut starts = vec![kmeans_labels.classes().to_vec()];
    for _ in 0..cfg.heuristic_restarts {
        let centers = rand::seq::index::sample(&mut rng, n, n_cl).into_vec();
        starts.push(
            (0..n)
                .map(|i| {
                    let d = |c: usize| -> f64 {
                        train.input(i).iter().zip(train.input(c)).map(|(a, b)| (a - b) * (a - b)).sum()
                    };
                    (0..n_cl).min_by(|&a, &b| d(centers[a]).total_cmp(&d(centers[b]))).expect("n_cl >= 1")
                })
                .collect(),
        );
    }
    let better = |o: f64, best: &Option<(f64, Vec<f64>)>| best.as_ref().is_none_or(|(b, _)| o < b - 1e-9 * b.abs().max(1.0));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut seen = std::collections::HashSet::new();
    for (idx, start) in starts.into_iter().enumerate() {
        let mut candidates = vec![];
        if idx == 0 {
            candidates.push(start.clone());
        }
        candidates.extend(max_affine_refine(train, start, n_cl));
        for classes in candidates {
            if !seen.insert(classes.clone()) {
                continue;
            }
            let mut local = milp.evaluate_reduced_any_order(train, &LabelingMatrix::new(classes, n_cl)?)?;
            for _ in 0..cfg.heuristic_rounds {
                let Some((obj, values)) = &local else { break };
                let labels = LabelingMatrix::new(argmax_labels(train, &milp.models_from(values)), n_cl)?;
                if labels.class_sizes().iter().any(|&s| s < min_size) || !seen.insert(labels.classes().to_vec()) {
                    break;
                }
                match milp.evaluate_reduced_any_order(train, &labels)? {
                    Some((o, v)) if o < obj - 1e-9 * obj.abs().max(1.0) => local = Some((o, v)),
                    _ => break,
                }
            }
            if let Some((o, v)) = local {
                if better(o, &best) {
                    best = Some((o, v));
                }
            }
        }
    }
    Ok(best)
}

/// Optimal labeling by branch-and-bound on the big-M MILP, then the MIS-con
/// least-squares refit with the labels fixed.
pub fn design_mis_con_lab(train: &Dataset<f64>, cfg: &DesignConfig) -> Result<DesignReport> {
    let mut clock = Stopwatch::new(cfg.record_timing);
    let milp = clock.time("milp-build", || build_mis_con_lab_milp(train, cfg))?;
    let km = clock.time("kmeans", || kmeans(train, cfg.n_cl, cfg.seed, cfg.kmeans_restarts))?;
    let start = clock.time("heuristic", || heuristic_incumbent(&milp, train, &km.labels, cfg))?;
    let start_objective = start.as_ref().map(|(o, _)| *o);
    let options = MilpOptions {
        limits: cfg.milp_limits,
        initial_solution: start.map(|(_, v)| v),
        log_interval: cfg.milp_log_interval,
    };
    let result = clock.time("milp", || solve_milp_with(milp.program(), &options))?;
    log::debug!("labeling MILP summary: {}", result.summary_json());
    let values = result.values.as_ref().ok_or(Error::NoIncumbent)?;
    let labels = milp.labels_from(values)?;
    let refit = design_mis_con(train, &labels, cfg)?;
    let mut timings = clock.timings;
    for (stage, t) in refit.stats.timings {
        *timings.entry(stage).or_insert(0.0) += t;
    }
    let mut notes = refit.stats.notes;
    if let Some(limit) = result.limit_hit {
        notes.push(format!(
            "labeling search stopped by the {} limit with gap {:.3e}",
            match limit {
                Limit::Time => "time",
                Limit::Nodes => "node",
            },
            result.gap
        ));
    }
    Ok(DesignReport {
        method: Method::MisConLab,
        sensor: refit.sensor,
        train_rmse: refit.train_rmse,
        labels_used: labels,
        stats: SolverStats {
            timings,
            milp: Some(MilpStats {
                status: result.status,
                objective: result.objective_value,
                best_bound: result.best_bound,
                gap: result.gap,
                nodes: result.nodes_explored,
                limit_hit: result.limit_hit,
                start_objective,
                elapsed_s: cfg.record_timing.then_some(result.elapsed_s),
            }),
            continuity_gap: refit.stats.continuity_gap,
            notes,
        },
    })
}
