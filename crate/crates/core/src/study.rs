//! PCT case study: ground truth, scenarios, method comparison and Monte Carlo.
//!
//! RNG streams: every scenario seeds one `ChaCha8Rng` and uses stream 0 for
//! sampling (P, T), stream 1 for the train/test split and stream 2 for noise.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{continuity_gap, design, DesignConfig, Method, CONTINUITY_TOL};
use crate::error::{Error, Result};
use crate::milp::MipStatus;
use crate::model::{normalize, Dataset, Scaler, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PctGroundTruth {
    /// Gas constant, J/mol/K.
    pub r: f64,
    /// Heat of vaporization, J/mol.
    pub h_v: f64,
    /// Reference pressure, Pa.
    pub p_ref: f64,
}

impl Default for PctGroundTruth {
    fn default() -> Self {
        Self {
            r: 8.314,
            h_v: 55940.550,
            p_ref: 145325.0,
        }
    }
}

/// Pressure-compensated temperature in K for pressure `p` (Pa) and temperature `t` (K).
pub fn pct(p: f64, t: f64, gt: &PctGroundTruth) -> Result<f64> {
    if !(p > 0.0 && t > 0.0) {
        return Err(Error::Invalid(format!("pct needs positive P and T, got P = {p}, T = {t}")));
    }
    let denom = gt.r / gt.h_v * (p / gt.p_ref).ln() + 1.0 / t;
    if !(denom > 0.0) {
        return Err(Error::Invalid(format!("pct undefined at P = {p}, T = {t}")));
    }
    Ok(1.0 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Clustered,
    Uniform,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clustered" => Ok(Self::Clustered),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::Invalid(format!("unknown scenario kind `{s}`; valid kinds: clustered, uniform"))),
        }
    }
}

/// Cluster centers as fractions of the (P, T) ranges; points are uniform in a
/// box of `half_width` (same fraction units) around each center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub centers: Vec<[f64; 2]>,
    pub half_width: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            centers: vec![[0.15, 0.25], [0.5, 0.75], [0.85, 0.4]],
            half_width: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Points generated in total; clustered scenarios split them evenly over the centers.
    pub n_total: usize,
    /// Std of the Gaussian noise added to normalized training outputs.
    pub noise_sigma: f64,
    pub train_fraction: f64,
    pub p_range: [f64; 2],
    pub t_range: [f64; 2],
    pub clusters: ClusterSpec,
    pub ground_truth: PctGroundTruth,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Clustered,
            n_total: 90,
            noise_sigma: 0.005,
            train_fraction: 0.5,
            p_range: [2000.0, 20000.0],
            t_range: [523.15, 573.15],
            clusters: ClusterSpec::default(),
            ground_truth: PctGroundTruth::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("p_range", self.p_range), ("t_range", self.t_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(Error::Invalid(format!("{name}: need 0 < min < max, got [{lo}, {hi}]")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Invalid(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Invalid(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma)));
        }
        let (n_train, n_test) = self.split_sizes();
        if n_train < 1 || n_test < 1 {
            return Err(Error::Invalid(format!("n_total = {} leaves an empty split", self.n_total)));
        }
        let g = &self.ground_truth;
        if !(g.r > 0.0 && g.h_v > 0.0 && g.p_ref > 0.0) {
            return Err(Error::Invalid("ground_truth constants must be positive".into()));
        }
        if self.kind == ScenarioKind::Clustered {
            let c = &self.clusters;
            if c.centers.is_empty() {
                return Err(Error::Invalid("clusters.centers is empty".into()));
            }
            if !(c.half_width >= 0.0) {
                return Err(Error::Invalid(format!("clusters.half_width must be nonnegative, got {}", c.half_width)));
            }
            if self.n_total < c.centers.len() {
                return Err(Error::Invalid(format!("n_total = {} is below the number of clusters", self.n_total)));
            }
            for (k, center) in c.centers.iter().enumerate() {
                if center.iter().any(|&v| v - c.half_width < 0.0 || v + c.half_width > 1.0) {
                    return Err(Error::Invalid(format!("clusters.centers[{k}] with its spread leaves the operating box")));
                }
            }
        }
        Ok(())
    }

    pub fn split_sizes(&self) -> (usize, usize) {
        let n_train = (self.n_total as f64 * self.train_fraction).round() as usize;
        (n_train, self.n_total.saturating_sub(n_train))
    }

    fn pressure(&self, frac: f64) -> f64 {
        self.p_range[0] + frac * (self.p_range[1] - self.p_range[0])
    }

    fn temperature(&self, frac: f64) -> f64 {
        self.t_range[0] + frac * (self.t_range[1] - self.t_range[0])
    }
}

/// Normalized train/test splits plus the scaler of the full generated set.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub scaler: Scaler<f64>,
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fractions: Vec<[f64; 2]> = match cfg.kind {
        ScenarioKind::Uniform => (0..cfg.n_total).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect(),
        ScenarioKind::Clustered => {
            let c = &cfg.clusters;
            let k = c.centers.len();
            let mut out = Vec::with_capacity(cfg.n_total);
            for (j, center) in c.centers.iter().enumerate() {
                let count = cfg.n_total / k + usize::from(j < cfg.n_total % k);
                for _ in 0..count {
                    let mut pt = *center;
                    if c.half_width > 0.0 {
                        for v in &mut pt {
                            *v += rng.gen_range(-c.half_width..=c.half_width);
                        }
                    }
                    out.push(pt);
                }
            }
            out
        }
    };
    let rows = fractions
        .iter()
        .map(|[fp, ft]| {
            let (p, t) = (cfg.pressure(*fp), cfg.temperature(*ft));
            Ok((vec![p, t], pct(p, t, &cfg.ground_truth)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (all, scaler) = normalize(&Dataset::from_rows(&rows)?)?;

    rng.set_stream(1);
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut rng);
    let (n_train, _) = cfg.split_sizes();
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    rng.set_stream(2);
    let train = all.subset(&train_idx)?;
    let train = if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
        let noisy = train.outputs().iter().map(|&y| y + noise.sample(&mut rng)).collect();
        train.with_outputs(noisy)?
    } else {
        train
    };
    Ok(Scenario {
        train,
        test: all.subset(&test_idx)?,
        scaler,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub train_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    /// Design wall-clock seconds; `None` when timing is disabled or the method failed.
    pub t_comp_s: Option<f64>,
    /// Continuity check outcome for the continuity-coupled methods.
    pub continuity_ok: Option<bool>,
    pub milp_status: Option<MipStatus>,
    pub milp_gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

/// A comparison table plus the sensors behind its successful rows.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub table: ComparisonTable,
    pub sensors: Vec<(Method, SensorModel<f64>)>,
}

fn compare_on(scenario: &Scenario, seed: u64, methods: &[Method], cfg: &DesignConfig) -> Result<Comparison> {
    if methods.is_empty() {
        return Err(Error::Invalid("no methods to compare".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    let mut sensors = Vec::new();
    for &method in methods {
        let start = Instant::now();
        let outcome = design(method, &scenario.train, None, cfg);
        let elapsed = start.elapsed().as_secs_f64();
        match outcome.and_then(|r| Ok((scenario_rmse(&r.sensor, &scenario.test)?, r))) {
            Ok((test_rmse, report)) => {
                let continuity_ok = matches!(method, Method::MisCon | Method::MisConLab)
                    .then(|| continuity_gap(&report.sensor, cfg.seed) <= CONTINUITY_TOL);
                rows.push(ComparisonRow {
                    method,
                    train_rmse: Some(report.train_rmse),
                    test_rmse: Some(test_rmse),
                    t_comp_s: cfg.record_timing.then_some(elapsed),
                    continuity_ok,
                    milp_status: report.stats.milp.as_ref().map(|m| m.status),
                    milp_gap: report.stats.milp.as_ref().map(|m| m.gap),
                    error: None,
                });
                let sensor = report.sensor.with_scaler(scenario.scaler.clone())?;
                sensors.push((method, sensor));
            }
            Err(e) => {
                log::warn!("{method} failed on seed {seed}: {e}");
                rows.push(ComparisonRow {
                    method,
                    train_rmse: None,
                    test_rmse: None,
                    t_comp_s: None,
                    continuity_ok: None,
                    milp_status: None,
                    milp_gap: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(Comparison {
        table: ComparisonTable { seed, rows },
        sensors,
    })
}

fn scenario_rmse(sensor: &SensorModel<f64>, data: &Dataset<f64>) -> Result<f64> {
    sensor.rmse_on(data)
}

/// Trains every method on the scenario's training split and scores both splits
/// in normalized units. Failures are recorded per row.
pub fn run_comparison(scenario: &ScenarioConfig, methods: &[Method], cfg: &DesignConfig) -> Result<Comparison> {
    cfg.validate()?;
    let data = generate_scenario(scenario)?;
    compare_on(&data, scenario.seed, methods, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub method: Method,
    pub split: Split,
    pub rmse: f64,
    pub t_comp_s: Option<f64>,
}

/// Quartiles with linear interpolation between order statistics and the
/// points beyond 1.5·IQR from the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub method: Method,
    pub split: Split,
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub base_seed: u64,
    /// Sorted by run, then method order, then split.
    pub records: Vec<RunRecord>,
    pub boxplots: Vec<BoxplotSummary>,
    /// Failed runs per method, in method order.
    pub failures: Vec<(Method, usize)>,
}

/// Linear-interpolation quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot(method: Method, split: Split, values: &[f64]) -> Option<BoxplotSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let outliers = v.iter().copied().filter(|&x| x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr).collect();
    Some(BoxplotSummary {
        method,
        split,
        n: v.len(),
        q1,
        median: quantile_sorted(&v, 0.5),
        q3,
        outliers,
    })
}

/// Runs the comparison for seeds `scenario.seed + run`, `run < runs`, on a pool of
/// `jobs` workers (all cores when `None`).
pub fn run_montecarlo(
    scenario: &ScenarioConfig,
    runs: usize,
    methods: &[Method],
    cfg: &DesignConfig,
    jobs: Option<usize>,
) -> Result<MonteCarloReport> {
    if runs == 0 {
        return Err(Error::Invalid("runs must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Invalid("no methods to compare".into()));
    }
    cfg.validate()?;
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let tables: Vec<Result<ComparisonTable>> = pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|run| {
                let sc = ScenarioConfig {
                    seed: scenario.seed.wrapping_add(run as u64),
                    ..scenario.clone()
                };
                run_comparison(&sc, methods, cfg).map(|c| c.table)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures: Vec<(Method, usize)> = methods.iter().map(|&m| (m, 0)).collect();
    for (run, table) in tables.into_iter().enumerate() {
        let table = table?;
        for (slot, row) in table.rows.iter().enumerate() {
            match (row.train_rmse, row.test_rmse) {
                (Some(tr), Some(te)) => {
                    for (split, rmse) in [(Split::Train, tr), (Split::Test, te)] {
                        records.push(RunRecord {
                            run,
                            method: row.method,
                            split,
                            rmse,
                            t_comp_s: row.t_comp_s,
                        });
                    }
                }
                _ => failures[slot].1 += 1,
            }
        }
    }
    let mut boxplots = Vec::new();
    for &method in methods {
        for split in [Split::Train, Split::Test] {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.split == split)
                .map(|r| r.rmse)
                .collect();
            boxplots.extend(boxplot(method, split, &vals));
        }
    }
    Ok(MonteCarloReport {
        runs,
        base_seed: scenario.seed,
        records,
        boxplots,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub method: Method,
    pub p_norm: f64,
    pub t_norm: f64,
    pub region: usize,
    pub prediction: f64,
    pub truth: f64,
}

/// Predictions of each sensor on a `side × side` grid of the normalized
/// (P, T) box, with the normalized ground truth alongside.
pub fn surface(sensors: &[(Method, SensorModel<f64>)], scaler: &Scaler<f64>, gt: &PctGroundTruth, side: usize) -> Result<Vec<SurfacePoint>> {
    if side < 2 {
        return Err(Error::Invalid("surface grid needs at least 2 points per side".into()));
    }
    let step = 1.0 / (side - 1) as f64;
    let mut out = Vec::with_capacity(sensors.len() * side * side);
    for (method, sensor) in sensors {
        for a in 0..side {
            for b in 0..side {
                let x = [a as f64 * step, b as f64 * step];
                let raw = scaler.denormalize_input(&x);
                out.push(SurfacePoint {
                    method: *method,
                    p_norm: x[0],
                    t_norm: x[1],
                    region: sensor.region(&x),
                    prediction: sensor.predict(&x)?,
                    truth: scaler.normalize_output(pct(raw[0], raw[1], gt)?),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pct_at_reference_pressure_is_temperature() {
        let gt = PctGroundTruth::default();
        assert!((pct(145325.0, 550.0, &gt).unwrap() - 550.0).abs() < 1e-9);
    }

    #[test]
    fn pct_low_pressure_value() {
        // 1 / (8.314/55940.55 · ln(2000/145325) + 1/523.15)
        let gt = PctGroundTruth::default();
        let expected = 1.0 / (8.314f64 / 55940.55 * (2000.0f64 / 145325.0).ln() + 1.0 / 523.15);
        let v = pct(2000.0, 523.15, &gt).unwrap();
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 784.6).abs() < 0.1, "{v}");
    }

    #[test]
    fn pct_decreases_with_pressure() {
        let gt = PctGroundTruth::default();
        for t in [523.15, 548.0, 573.15] {
            let mut prev = f64::INFINITY;
            for k in 0..=50 {
                let v = pct(2000.0 + 360.0 * k as f64, t, &gt).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn pct_rejects_bad_inputs() {
        let gt = PctGroundTruth::default();
        assert!(pct(0.0, 500.0, &gt).is_err());
        assert!(pct(1.0, 1e6, &gt).is_err());
    }

    #[test]
    fn clustered_default_split() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (45, 45));
        let mut ids: Vec<usize> = s.train.ids().iter().chain(s.test.ids()).copied().collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..90).collect::<Vec<_>>());
    }

    #[test]
    fn noise_free_columns_span_unit_interval() {
        let cfg = ScenarioConfig {
            kind: ScenarioKind::Uniform,
            n_total: 40,
            noise_sigma: 0.0,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        let all: Vec<(Vec<f64>, f64)> = (0..s.train.len())
            .map(|i| (s.train.input(i).to_vec(), s.train.outputs()[i]))
            .chain((0..s.test.len()).map(|i| (s.test.input(i).to_vec(), s.test.outputs()[i])))
            .collect();
        for col in 0..3 {
            let vals: Vec<f64> = all.iter().map(|(x, y)| if col < 2 { x[col] } else { *y }).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0), "column {col}");
        }
    }

    #[test]
    fn scenario_is_reproducible() {
        let cfg = ScenarioConfig {
            seed: 5,
            ..ScenarioConfig::default()
        };
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn cluster_leaving_box_rejected() {
        let cfg = ScenarioConfig {
            clusters: ClusterSpec {
                centers: vec![[0.05, 0.5]],
                half_width: 0.08,
            },
            ..ScenarioConfig::default()
        };
        assert!(generate_scenario(&cfg).is_err());
        let bad = ScenarioConfig {
            p_range: [20000.0, 2000.0],
            ..ScenarioConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("p_range"));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        let b = boxplot(Method::Sis, Split::Test, &[3.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (3.0, 3.0, 3.0));
        let b = boxplot(Method::Sis, Split::Test, &[1.0, 1.1, 1.2, 1.3, 9.0]).unwrap();
        assert_eq!(b.outliers, vec![9.0]);
    }

    #[test]
    fn single_method_comparison() {
        let c = run_comparison(&ScenarioConfig::default(), &[Method::Sis], &DesignConfig::default()).unwrap();
        assert_eq!(c.table.rows.len(), 1);
        assert!(c.table.rows[0].test_rmse.unwrap() > 0.0);
    }
}
