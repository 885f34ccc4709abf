//! `softsense`: generate PCT data, train and evaluate sensors, run comparisons.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver failure or no
//! incumbent, 4 I/O error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use softsense::design::{design, Method};
use softsense::io;
use softsense::model::Scaler;
use softsense::study::{generate_scenario, run_comparison, run_montecarlo, surface, ScenarioKind};
use softsense::{Error, LabelingMatrix, SensorModel};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "softsense", version, about = "Piecewise-affine inferential sensor design")]
struct Cli {
    /// TOML manifest; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv, test.csv and scaler.json for a PCT scenario.
    Generate {
        #[command(flatten)]
        scenario: ScenarioFlags,
    },
    /// Design a sensor from a training CSV; writes sensor.json and report.json.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "mis-con-lab")]
        method: String,
        /// Scaler to attach; defaults to scaler.json next to the training file.
        #[arg(long)]
        scaler: Option<PathBuf>,
        #[command(flatten)]
        design: DesignFlags,
    },
    /// Score a sensor on a CSV; writes metrics.json.
    Evaluate {
        #[arg(long)]
        sensor: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and score several methods on one scenario.
    Compare {
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[command(flatten)]
        scenario: ScenarioFlags,
        #[command(flatten)]
        design: DesignFlags,
    },
    /// Repeat the comparison over consecutive seeds and summarize.
    Montecarlo {
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        scenario: ScenarioFlags,
        #[command(flatten)]
        design: DesignFlags,
    },
}

#[derive(Args, Default)]
struct ScenarioFlags {
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Args, Default)]
struct DesignFlags {
    #[arg(long)]
    n_cl: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// MILP wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// MILP relative gap target.
    #[arg(long)]
    gap: Option<f64>,
    /// MILP node cap.
    #[arg(long)]
    node_cap: Option<usize>,
    #[arg(long)]
    design_seed: Option<u64>,
    /// Omit wall-clock timings so outputs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

struct Failure {
    code: u8,
    stage: &'static str,
    message: String,
}

impl Failure {
    fn validation(stage: &'static str, message: impl Into<String>) -> Self {
        Self {
            code: 2,
            stage,
            message: message.into(),
        }
    }

    fn from_error(stage: &'static str, e: Error) -> Self {
        let code = match e {
            Error::Io(_) => 4,
            Error::Lp(_) | Error::Qp(_) | Error::Milp(_) | Error::Linalg(_) | Error::NoIncumbent | Error::Discontinuous { .. } => 3,
            _ => 2,
        };
        Self {
            code,
            stage,
            message: e.to_string(),
        }
    }

    fn io(stage: &'static str, path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: 4,
            stage,
            message: format!("{}: {e}", path.display()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

impl ScenarioFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Outcome {
        let s = &mut cfg.scenario;
        if let Some(k) = &self.kind {
            s.kind = k.parse::<ScenarioKind>().map_err(|e| Failure::validation("config", format!("kind: {e}")))?;
        }
        if let Some(v) = self.n_total {
            s.n_total = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.noise_sigma {
            s.noise_sigma = v;
        }
        if let Some(v) = self.train_fraction {
            s.train_fraction = v;
        }
        if let Some(v) = self.p_min {
            s.p_range[0] = v;
        }
        if let Some(v) = self.p_max {
            s.p_range[1] = v;
        }
        if let Some(v) = self.t_min {
            s.t_range[0] = v;
        }
        if let Some(v) = self.t_max {
            s.t_range[1] = v;
        }
        Ok(())
    }
}

impl DesignFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.design;
        if let Some(v) = self.n_cl {
            d.n_cl = v;
        }
        if let Some(v) = self.gamma {
            d.gamma = v;
        }
        if let Some(v) = self.time_limit {
            d.milp_limits.time_limit_s = v;
        }
        if let Some(v) = self.gap {
            d.milp_limits.gap_target = v;
        }
        if let Some(v) = self.node_cap {
            d.milp_limits.node_cap = v;
        }
        if let Some(v) = self.design_seed {
            d.seed = v;
        }
        if self.no_timing {
            d.record_timing = false;
        }
    }
}

fn parse_methods(names: &[String]) -> Outcome<Vec<Method>> {
    names
        .iter()
        .map(|n| n.trim().parse::<Method>().map_err(|e| Failure::from_error("config", e)))
        .collect()
}

fn create_out_dir(cfg: &RunConfig) -> Outcome<&Path> {
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Failure::io("output", dir, e))?;
    Ok(dir)
}

fn write_manifest(cfg: &RunConfig) -> Outcome {
    let path = cfg.out_dir.join("manifest.toml");
    std::fs::write(&path, cfg.to_manifest()).map_err(|e| Failure::io("output", &path, e))
}

fn write_csv(path: PathBuf, f: impl FnOnce(&mut Vec<u8>) -> softsense::Result<()>) -> Outcome {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Failure::from_error("output", e))?;
    std::fs::write(&path, buf).map_err(|e| Failure::io("output", &path, e))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Outcome {
    io::write_json_file(&path, value).map_err(|e| Failure::from_error("output", e))
}

#[derive(Serialize)]
struct Metrics {
    n: usize,
    rmse: f64,
    max_abs_error: f64,
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|m| Failure::validation("config", m))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.verbosity = cfg.verbosity.max(cli.verbose);
    init_logging(cfg.verbosity);

    match cli.command {
        Command::Generate { scenario } => {
            scenario.apply(&mut cfg)?;
            cfg.scenario.validate().map_err(|e| Failure::validation("config", format!("scenario: {e}")))?;
            let sc = generate_scenario(&cfg.scenario).map_err(|e| Failure::from_error("generate", e))?;
            let dir = create_out_dir(&cfg)?;
            write_csv(dir.join("train.csv"), |w| io::write_dataset(w, &sc.train))?;
            write_csv(dir.join("test.csv"), |w| io::write_dataset(w, &sc.test))?;
            write_json(dir.join("scaler.json"), &sc.scaler)?;
            write_manifest(&cfg)?;
            println!("wrote {} training and {} test rows to {}", sc.train.len(), sc.test.len(), dir.display());
        }
        Command::Train {
            train,
            method,
            scaler,
            design: flags,
        } => {
            flags.apply(&mut cfg);
            let method = method.parse::<Method>().map_err(|e| Failure::from_error("config", e))?;
            cfg.design.validate().map_err(|e| Failure::validation("config", format!("design: {e}")))?;
            let data = io::read_dataset_file(&train).map_err(|e| match e {
                Error::Io(io) => Failure::io("read", &train, io),
                e => Failure::from_error("read", e),
            })?;
            let scaler_path = scaler.unwrap_or_else(|| train.with_file_name("scaler.json"));
            let scaler: Scaler<f64> = if scaler_path.exists() {
                io::read_json_file(&scaler_path).map_err(|e| Failure::from_error("read", e))?
            } else {
                Scaler::identity(data.n_inputs())
            };
            let labels = match data.labels() {
                Some(l) => {
                    let n_cl = l.iter().max().map_or(1, |m| m + 1);
                    Some(LabelingMatrix::new(l.to_vec(), n_cl).map_err(|e| Failure::from_error("read", e))?)
                }
                None => None,
            };
            let mut report = design(method, &data, labels.as_ref(), &cfg.design).map_err(|e| Failure::from_error("train", e))?;
            report.sensor = report.sensor.with_scaler(scaler).map_err(|e| Failure::from_error("train", e))?;
            let dir = create_out_dir(&cfg)?;
            write_json(dir.join("sensor.json"), &report.sensor)?;
            write_json(dir.join("report.json"), &report)?;
            write_manifest(&cfg)?;
            match &report.stats.milp {
                Some(m) => println!(
                    "{method}: train rmse {} (labeling {:?}, gap {}, {} nodes)",
                    report.train_rmse, m.status, m.gap, m.nodes
                ),
                None => println!("{method}: train rmse {}", report.train_rmse),
            }
        }
        Command::Evaluate { sensor, data } => {
            let s: SensorModel = io::read_json_file(&sensor).map_err(|e| Failure::from_error("read", e))?;
            let d = io::read_dataset_file(&data).map_err(|e| Failure::from_error("read", e))?;
            let pred = s.predict_all(&d).map_err(|e| Failure::from_error("evaluate", e))?;
            let metrics = Metrics {
                n: d.len(),
                rmse: softsense::model::rmse(d.outputs(), &pred).map_err(|e| Failure::from_error("evaluate", e))?,
                max_abs_error: d.outputs().iter().zip(&pred).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            };
            let dir = create_out_dir(&cfg)?;
            write_json(dir.join("metrics.json"), &metrics)?;
            println!("rmse {} over {} rows", metrics.rmse, metrics.n);
        }
        Command::Compare {
            methods,
            scenario,
            design: flags,
        } => {
            if let Some(m) = methods {
                cfg.methods = parse_methods(&m)?;
            }
            scenario.apply(&mut cfg)?;
            flags.apply(&mut cfg);
            cfg.validate().map_err(|m| Failure::validation("config", m))?;
            let cmp = run_comparison(&cfg.scenario, &cfg.methods, &cfg.design).map_err(|e| Failure::from_error("compare", e))?;
            let sc = generate_scenario(&cfg.scenario).map_err(|e| Failure::from_error("compare", e))?;
            let grid = surface(&cmp.sensors, &sc.scaler, &cfg.scenario.ground_truth, 21).map_err(|e| Failure::from_error("compare", e))?;
            let dir = create_out_dir(&cfg)?;
            write_csv(dir.join("comparison.csv"), |w| io::write_comparison_csv(w, &cmp.table))?;
            write_json(dir.join("comparison.json"), &cmp.table)?;
            write_csv(dir.join("surface.csv"), |w| io::write_surface_csv(w, &grid))?;
            write_manifest(&cfg)?;
            for r in &cmp.table.rows {
                match &r.error {
                    None => println!(
                        "{:<12} train {:.4e} test {:.4e}",
                        r.method.name(),
                        r.train_rmse.unwrap_or(f64::NAN),
                        r.test_rmse.unwrap_or(f64::NAN)
                    ),
                    Some(e) => println!("{:<12} failed: {e}", r.method.name()),
                }
            }
        }
        Command::Montecarlo {
            runs,
            methods,
            jobs,
            scenario,
            design: flags,
        } => {
            if let Some(m) = methods {
                cfg.methods = parse_methods(&m)?;
            }
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            scenario.apply(&mut cfg)?;
            flags.apply(&mut cfg);
            cfg.validate().map_err(|m| Failure::validation("config", m))?;
            let report = run_montecarlo(&cfg.scenario, cfg.runs, &cfg.methods, &cfg.design, cfg.jobs)
                .map_err(|e| Failure::from_error("montecarlo", e))?;
            let dir = create_out_dir(&cfg)?;
            write_csv(dir.join("montecarlo.csv"), |w| io::write_montecarlo_csv(w, &report))?;
            write_csv(dir.join("boxplot.csv"), |w| io::write_boxplot_csv(w, &report))?;
            write_json(dir.join("montecarlo.json"), &report)?;
            write_manifest(&cfg)?;
            for b in report.boxplots.iter().filter(|b| b.split == softsense::study::Split::Test) {
                println!("{:<12} test median {:.4e} [{:.4e}, {:.4e}]", b.method.name(), b.median, b.q1, b.q3);
            }
        }
    }
    Ok(())
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.message);
            ExitCode::from(f.code)
        }
    }
}
