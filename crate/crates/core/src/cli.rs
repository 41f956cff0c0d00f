//! The `qmem` command line.
//!
//! Exit status is 0 on success (including impossibility verdicts), 1 on a
//! usage or I/O error and 2 when `verify` finds a violation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{
    capacity, hitting_prob_lb, kappa_surface, overhead_bound_with, BoundReport, CapacityFn,
    HittingBound, KappaOverhead, KappaSurface, Verdict,
};
use crate::config::{Command, ExperimentConfig, Format, Settings, THETA_LIMIT};
use crate::error::{Error, Result};
use crate::exact::{
    build_kernel, evolve_direct, evolve_path, hitting_time_distribution, HittingTimeDistribution,
    StateDistribution, DEFAULT_EXACT_CAP,
};
use crate::meanfield::{
    default_delta, epochs_to_cross_with_delta, sketch_phase_bound, sketch_phase_count,
    MeanFieldSequence,
};
use crate::montecarlo::{
    run_batch, run_coupled, steady_fraction, HittingEstimate, SteadyFraction, TrajectoryBatch,
};
use crate::output::{to_json, write_atomic, Table};
use crate::verify::run_default;

pub const OUTPUT_DIR_ENV: &str = "QMEM_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

/// Threshold fraction used by `simulate` and `exact` when `beta` is not given.
pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Parser, Debug)]
#[command(
    name = "qmem",
    version,
    about = "Error accumulation in a batch-corrected quantum memory"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Monte Carlo exceedance curve P[X_t > n beta]
    Simulate(Flags),
    /// Exact distribution of X_t and the hitting time
    Exact(Flags),
    /// Mean-field crossing epoch T and iterates
    Meanfield(Flags),
    /// Overhead lower bound and thresholds
    Bounds(Flags),
    /// Coupled memories at two static-phase probabilities
    Couple(Flags),
    /// Bounds and crossing epochs over a parameter grid
    Sweep(Flags),
    /// Built-in cross-check suite
    Verify(Flags),
}

/// Every flag is passed through the same parser as the config file.
#[derive(Args, Debug, Default)]
struct Flags {
    /// `key = value` config file; flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Static-phase decoherence probability
    #[arg(long)]
    q: Option<String>,
    #[arg(long = "q-period", alias = "q_period")]
    q_period: Option<String>,
    /// erasure or depolarizing
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// A number, or `limit` for 1e-6
    #[arg(long)]
    theta: Option<String>,
    /// Error probability at which to evaluate the capacity
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long = "t-g", alias = "t_g")]
    t_g: Option<String>,
    /// Logical qubits
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long = "n-traj", alias = "n_traj")]
    n_traj: Option<String>,
    #[arg(long = "t-max", alias = "t_max")]
    t_max: Option<String>,
    #[arg(long = "seed", alias = "master-seed", alias = "master_seed")]
    master_seed: Option<String>,
    #[arg(long = "burn-in", alias = "burn_in")]
    burn_in: Option<String>,
    #[arg(long = "t-probe", alias = "t_probe")]
    t_probe: Option<String>,
    #[arg(long = "q-low", alias = "q_low")]
    q_low: Option<String>,
    #[arg(long = "q-high", alias = "q_high")]
    q_high: Option<String>,
    /// erasure-exact, depolarizing-hashing or depolarizing-threshold
    #[arg(long)]
    capacity: Option<String>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    threads: Option<String>,
    #[arg(long, short)]
    output: Option<String>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// name:start:stop:steps, repeatable
    #[arg(long, value_name = "AXIS")]
    grid: Vec<String>,
}

impl Flags {
    fn settings(&self) -> Result<Settings> {
        let pairs = [
            ("n", &self.n),
            ("p", &self.p),
            ("alpha", &self.alpha),
            ("q", &self.q),
            ("q_period", &self.q_period),
            ("noise", &self.noise),
            ("beta", &self.beta),
            ("theta", &self.theta),
            ("gamma", &self.gamma),
            ("kappa", &self.kappa),
            ("t_g", &self.t_g),
            ("l", &self.l),
            ("epsilon", &self.epsilon),
            ("delta", &self.delta),
            ("n_traj", &self.n_traj),
            ("t_max", &self.t_max),
            ("master_seed", &self.master_seed),
            ("burn_in", &self.burn_in),
            ("t_probe", &self.t_probe),
            ("q_low", &self.q_low),
            ("q_high", &self.q_high),
            ("capacity", &self.capacity),
            ("threads", &self.threads),
            ("output", &self.output),
            ("format", &self.format),
        ];
        let mut s = Settings::default();
        for (key, value) in pairs {
            if let Some(v) = value {
                s.set(key, v)?;
            }
        }
        for axis in &self.grid {
            s.set("grid", axis)?;
        }
        Ok(s)
    }
}

/// Rendered output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub body: String,
    pub exit: i32,
}

/// Parses `args` (program name first), runs the command and writes its
/// output. Returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (command, flags) = match cli.command {
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Exact(f) => (Command::Exact, f),
        Cmd::Meanfield(f) => (Command::Meanfield, f),
        Cmd::Bounds(f) => (Command::Bounds, f),
        Cmd::Couple(f) => (Command::Couple, f),
        Cmd::Sweep(f) => (Command::Sweep, f),
        Cmd::Verify(f) => (Command::Verify, f),
    };
    match run_flags(command, &flags) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn run_flags(command: Command, flags: &Flags) -> Result<i32> {
    let file_text =
        match &flags.config {
            Some(path) => Some(fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?),
            None => None,
        };
    let cfg = ExperimentConfig::parse(command, file_text.as_deref(), flags.settings()?)?;
    if let Some(threads) = cfg.threads {
        // A second call in the same process fails; the first pool stays.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if cfg.theta == Some(THETA_LIMIT) {
        eprintln!(
            "note: theta = {THETA_LIMIT:e} stands in for the theta -> 0 limit; \
             every number below is evaluated at that theta, not at the limit"
        );
    }
    let outcome = execute(&cfg)?;
    emit(&cfg, &outcome.body)?;
    Ok(outcome.exit)
}

fn emit(cfg: &ExperimentConfig, body: &str) -> Result<()> {
    let path = match &cfg.output {
        Some(p) => Some(p.clone()),
        None => std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| {
                PathBuf::from(d).join(format!("qmem-{}.{}", cfg.command, cfg.format.extension()))
            }),
    };
    match path {
        Some(p) => {
            write_atomic(&p, body.as_bytes())
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))?;
            eprintln!("wrote {}", p.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Config(format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(())
}

/// Runs the command in `cfg` and renders its output in `cfg.format`.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ok = |body| Outcome {
        body,
        exit: EXIT_OK,
    };
    match cfg.command {
        Command::Simulate => simulate(cfg).map(ok),
        Command::Exact => exact(cfg).map(ok),
        Command::Meanfield => meanfield(cfg).map(ok),
        Command::Bounds => bounds(cfg).map(ok),
        Command::Couple => couple(cfg).map(ok),
        Command::Sweep => sweep(cfg).map(ok),
        Command::Verify => {
            let report = run_default(cfg.master_seed);
            let body = match cfg.format {
                Format::Json => to_json(cfg, &report),
                Format::Csv => {
                    let mut t = Table::new(
                        "verify",
                        &["check", "passed", "cases", "failures", "detail"],
                    );
                    for c in &report.checks {
                        t.push([
                            c.name.clone(),
                            c.passed.to_string(),
                            c.cases.to_string(),
                            c.failures.to_string(),
                            c.detail.clone(),
                        ]);
                    }
                    t.to_csv(cfg)
                }
            };
            Ok(Outcome {
                body,
                exit: if report.passed {
                    EXIT_OK
                } else {
                    EXIT_VERIFY_FAILED
                },
            })
        }
    }
}

fn verdict_cell(v: &Verdict) -> String {
    match v {
        Verdict::Finite { value } => value.to_string(),
        Verdict::Impossible { .. } => "impossible".into(),
    }
}

fn infeasible_verdict(beta: f64, limit: f64) -> Verdict {
    Verdict::Impossible {
        violated: format!("beta = {beta} >= (p - alpha)/p"),
        threshold: limit,
    }
}

#[derive(Serialize)]
struct SimulateResult {
    beta: f64,
    median_hitting_time: Option<u64>,
    estimate: HittingEstimate,
    steady: Option<SteadyFraction>,
}

fn simulate(cfg: &ExperimentConfig) -> Result<String> {
    let beta = cfg.beta.unwrap_or(DEFAULT_BETA);
    let spec = TrajectoryBatch::new(cfg.params, cfg.n_traj, cfg.t_max, cfg.master_seed);
    let mut estimate = run_batch(&spec, cfg.params.n as f64 * beta)?;
    let median_hitting_time = estimate.median_hitting_time();
    estimate.tau_samples = None;
    let steady = cfg.burn_in.map(|b| steady_fraction(&spec, b)).transpose()?;
    Ok(match cfg.format {
        Format::Json => to_json(
            cfg,
            &SimulateResult {
                beta,
                median_hitting_time,
                estimate,
                steady,
            },
        ),
        Format::Csv => {
            let mut t = Table::new(
                "simulate",
                &["t", "exceed_count", "p_hat", "ci99_halfwidth", "mean_x"],
            );
            for i in 0..estimate.p_hat_by_t.len() {
                t.push([
                    i.to_string(),
                    estimate.exceed_counts[i].to_string(),
                    estimate.p_hat_by_t[i].to_string(),
                    estimate.ci_halfwidth_by_t[i].to_string(),
                    estimate.mean_x_by_t[i].to_string(),
                ]);
            }
            t.to_csv(cfg)
        }
    })
}

#[derive(Serialize)]
struct ExactResult {
    beta: f64,
    threshold: f64,
    method: &'static str,
    tail_prob_by_t: Vec<f64>,
    mean_by_t: Vec<f64>,
    median_hitting_time: Option<u64>,
    hitting_time: Option<HittingTimeDistribution>,
}

fn exact(cfg: &ExperimentConfig) -> Result<String> {
    let beta = cfg.beta.unwrap_or(DEFAULT_BETA);
    let n = cfg.params.n;
    let threshold = n as f64 * beta;
    let start = StateDistribution::initial(n);
    let (method, path, hitting_time) = if n <= DEFAULT_EXACT_CAP {
        let kernel = build_kernel(&cfg.params)?;
        let path = evolve_path(&kernel, &start, cfg.t_max);
        let hit = hitting_time_distribution(&kernel, threshold, cfg.t_max);
        ("kernel", path, Some(hit))
    } else {
        let mut path = vec![start];
        for _ in 0..cfg.t_max {
            let next = evolve_direct(&cfg.params, path.last().expect("nonempty"), 1);
            path.push(next);
        }
        ("direct", path, None)
    };
    let result = ExactResult {
        beta,
        threshold,
        method,
        tail_prob_by_t: path.iter().map(|d| d.tail_prob(threshold)).collect(),
        mean_by_t: path.iter().map(StateDistribution::mean).collect(),
        median_hitting_time: hitting_time
            .as_ref()
            .and_then(HittingTimeDistribution::median),
        hitting_time,
    };
    Ok(match cfg.format {
        Format::Json => to_json(cfg, &result),
        Format::Csv => {
            let mut t = Table::new("exact", &["t", "tail_prob", "mean_x", "hit_pmf", "hit_cdf"]);
            for i in 0..result.tail_prob_by_t.len() {
                let (pmf, cdf) = match &result.hitting_time {
                    Some(h) => (h.pmf[i].to_string(), h.cdf(i).to_string()),
                    None => (String::new(), String::new()),
                };
                t.push([
                    i.to_string(),
                    result.tail_prob_by_t[i].to_string(),
                    result.mean_by_t[i].to_string(),
                    pmf,
                    cdf,
                ]);
            }
            t.to_csv(cfg)
        }
    })
}

#[derive(Serialize)]
struct Sketch {
    epsilon: f64,
    phase_bound: f64,
    phase_count: u64,
}

#[derive(Serialize)]
struct MeanfieldResult {
    beta: f64,
    /// `T` as a verdict: finite, or impossible when `beta` is out of reach.
    crossing: Verdict,
    t: Option<u64>,
    delta: Option<f64>,
    t_iteration: Option<u64>,
    fixed_point: Option<f64>,
    iterates: Vec<f64>,
    hitting_bound: Option<HittingBound>,
    sketch: Option<Sketch>,
}

fn meanfield(cfg: &ExperimentConfig) -> Result<String> {
    let beta = ExperimentConfig::require(cfg.beta, "beta")?;
    let ModelParams { n, p, alpha, .. } = cfg.params;
    let n = n as f64;
    let delta = cfg.delta.unwrap_or_else(|| default_delta(p, alpha, beta));
    let sketch = cfg
        .epsilon
        .map(|epsilon| -> Result<Sketch> {
            Ok(Sketch {
                epsilon,
                phase_bound: sketch_phase_bound(p, alpha, epsilon)?,
                phase_count: sketch_phase_count(p, alpha, epsilon)?,
            })
        })
        .transpose()?;
    let result = match MeanFieldSequence::with_delta(n, p, alpha, beta, delta) {
        Ok(seq) => {
            let crossing = epochs_to_cross_with_delta(p, alpha, beta, delta)?;
            let hitting_bound = match cfg.delta {
                None => Some(hitting_prob_lb(n, p, alpha, beta)?),
                Some(_) => None,
            };
            MeanfieldResult {
                beta,
                crossing: Verdict::Finite {
                    value: crossing.t as f64,
                },
                t: Some(crossing.t),
                delta: Some(crossing.delta),
                t_iteration: Some(seq.t),
                fixed_point: Some(seq.fixed_point),
                iterates: seq.iter().take(seq.t as usize + 1).collect(),
                hitting_bound,
                sketch,
            }
        }
        Err(Error::Infeasible { beta, limit }) => MeanfieldResult {
            beta,
            crossing: infeasible_verdict(beta, limit),
            t: None,
            delta: None,
            t_iteration: None,
            fixed_point: None,
            iterates: Vec::new(),
            hitting_bound: None,
            sketch,
        },
        Err(e) => return Err(e),
    };
    Ok(match cfg.format {
        Format::Json => to_json(cfg, &result),
        Format::Csv => {
            let mut t = Table::new("meanfield", &["k", "x_k", "above_threshold"]);
            for (k, x) in result.iterates.iter().enumerate() {
                t.push([k.to_string(), x.to_string(), (*x > n * beta).to_string()]);
            }
            t.to_csv(cfg)
        }
    })
}

use crate::chain::ModelParams;

#[derive(Serialize)]
struct CapacityPoint {
    gamma: f64,
    capacity_fn: String,
    capacity: f64,
}

#[derive(Serialize)]
struct KappaResult {
    surface: KappaSurface,
    at_alpha: KappaOverhead,
}

#[derive(Serialize)]
struct BoundsResult {
    report: Option<BoundReport>,
    capacity_at_gamma: Option<CapacityPoint>,
    kappa: Option<KappaResult>,
    hitting_bound: Option<Verdict>,
}

fn capacity_fn(cfg: &ExperimentConfig) -> Result<CapacityFn> {
    match &cfg.capacity {
        Some(name) => name.parse().map_err(Error::Config),
        None => Ok(CapacityFn::default_for(cfg.params.noise)),
    }
}

const BOUND_COLUMNS: &[&str] = &[
    "l",
    "p",
    "alpha",
    "q",
    "theta",
    "noise",
    "capacity",
    "beta",
    "n_min",
    "overhead_lb",
    "alpha_threshold",
    "noise_threshold",
    "c_time",
    "baseline_full_parallel",
    "crossover_alpha",
];

fn bound_cells(r: &BoundReport) -> Vec<String> {
    vec![
        r.inputs.l.to_string(),
        r.inputs.p.to_string(),
        r.inputs.alpha.to_string(),
        r.inputs.q.to_string(),
        r.inputs.theta.to_string(),
        r.inputs.noise.to_string(),
        r.inputs.capacity.clone(),
        r.beta.to_string(),
        verdict_cell(&r.n_min),
        verdict_cell(&r.overhead_lb),
        r.alpha_threshold.to_string(),
        r.noise_threshold.to_string(),
        r.c_time.to_string(),
        verdict_cell(&r.baseline_full_parallel),
        r.crossover_alpha.to_string(),
    ]
}

fn hitting_verdict(n: f64, p: f64, alpha: f64, beta: f64) -> Result<Verdict> {
    match hitting_prob_lb(n, p, alpha, beta) {
        Ok(b) => Ok(Verdict::Finite { value: b.value }),
        Err(Error::Infeasible { beta, limit }) => Ok(infeasible_verdict(beta, limit)),
        Err(e) => Err(e),
    }
}

fn bounds(cfg: &ExperimentConfig) -> Result<String> {
    let ModelParams {
        n,
        p,
        alpha,
        q,
        noise,
        ..
    } = cfg.params;
    let cap = capacity_fn(cfg)?;
    let report = match (cfg.l, cfg.theta, cfg.kappa.zip(cfg.t_g)) {
        (Some(l), Some(theta), _) => Some(overhead_bound_with(l, p, alpha, q, theta, noise, &cap)?),
        (_, _, Some(_)) => None,
        (l, _, None) => {
            let missing = if l.is_none() { "l" } else { "theta" };
            return Err(Error::Config(format!(
                "`{missing}` is required for bounds (or give `kappa` and `t_g` for the decoherence surface alone)"
            )));
        }
    };
    let capacity_at_gamma = cfg
        .gamma
        .map(|gamma| -> Result<CapacityPoint> {
            Ok(CapacityPoint {
                gamma,
                capacity_fn: cap.name(),
                capacity: capacity(&cap, gamma)?,
            })
        })
        .transpose()?;
    let kappa = match (cfg.kappa, cfg.t_g) {
        (Some(k), Some(t_g)) => {
            let surface = kappa_surface(k, t_g, noise)?;
            Some(KappaResult {
                at_alpha: surface.overhead(alpha)?,
                surface,
            })
        }
        _ => None,
    };
    let hitting_bound = cfg
        .beta
        .map(|b| hitting_verdict(n as f64, p, alpha, b))
        .transpose()?;
    let result = BoundsResult {
        report,
        capacity_at_gamma,
        kappa,
        hitting_bound,
    };
    Ok(match cfg.format {
        Format::Json => to_json(cfg, &result),
        Format::Csv => {
            let mut t = Table::new("bounds", BOUND_COLUMNS);
            if let Some(r) = &result.report {
                t.push(bound_cells(r));
            }
            t.to_csv(cfg)
        }
    })
}

fn couple(cfg: &ExperimentConfig) -> Result<String> {
    let q_low = ExperimentConfig::require(cfg.q_low, "q_low")?;
    let q_high = ExperimentConfig::require(cfg.q_high, "q_high")?;
    let r = run_coupled(
        &cfg.params,
        q_low,
        q_high,
        cfg.n_traj,
        cfg.t_max,
        cfg.master_seed,
    )?;
    Ok(match cfg.format {
        Format::Json => to_json(cfg, &r),
        Format::Csv => {
            let mut t = Table::new(
                "couple",
                &[
                    "n",
                    "q_low",
                    "q_high",
                    "n_paths",
                    "t_max",
                    "pairs_checked",
                    "inclusion_violations",
                    "count_violations",
                    "dominance_fraction",
                    "identical_paths",
                    "marginal_statistic",
                    "marginal_p_value",
                ],
            );
            t.push([
                r.n.to_string(),
                r.q_low.to_string(),
                r.q_high.to_string(),
                r.n_paths.to_string(),
                r.t_max.to_string(),
                r.pairs_checked.to_string(),
                r.inclusion_violations.to_string(),
                r.count_violations.to_string(),
                r.dominance_fraction.to_string(),
                r.identical_paths.to_string(),
                r.marginal.statistic.to_string(),
                r.marginal.p_value.to_string(),
            ]);
            t.to_csv(cfg)
        }
    })
}

/// One grid point's inputs.
#[derive(Clone, Copy)]
struct Point {
    params: ModelParams,
    beta: Option<f64>,
    theta: Option<f64>,
    l: Option<f64>,
    kappa: Option<f64>,
    t_g: Option<f64>,
}

impl Point {
    fn set(&mut self, name: &str, v: f64) {
        match name {
            "n" => self.params.n = v.round().max(0.0) as usize,
            "p" => self.params.p = v,
            "alpha" => self.params.alpha = v,
            "q" => self.params.q = v,
            "beta" => self.beta = Some(v),
            "theta" => self.theta = Some(v),
            "l" => self.l = Some(v),
            "kappa" => self.kappa = Some(v),
            "t_g" => self.t_g = Some(v),
            other => unreachable!("grid axis `{other}` passed validation"),
        }
    }
}

const SWEEP_TAIL: &[&str] = &["t_cross", "hitting_lb", "error"];

fn sweep_row(point: &Point, cap: &CapacityFn) -> Result<(Vec<String>, Vec<String>)> {
    let mut params = point.params;
    if let (Some(kappa), Some(t_g)) = (point.kappa, point.t_g) {
        params.p = kappa_surface(kappa, t_g, params.noise)?.p;
    }
    params.validate()?;
    let ModelParams {
        n,
        p,
        alpha,
        q,
        noise,
        ..
    } = params;
    let bound = match (point.l, point.theta) {
        (Some(l), Some(theta)) => {
            bound_cells(&overhead_bound_with(l, p, alpha, q, theta, noise, cap)?)
        }
        _ => {
            let mut cells = vec![String::new(); BOUND_COLUMNS.len()];
            cells[1] = p.to_string();
            cells[2] = alpha.to_string();
            cells[3] = q.to_string();
            cells
        }
    };
    let crossing = match point.beta {
        Some(beta) => match hitting_prob_lb(n as f64, p, alpha, beta) {
            Ok(b) => vec![b.t_cross.to_string(), b.value.to_string()],
            Err(Error::Infeasible { .. }) => vec!["impossible".into(), "impossible".into()],
            Err(e) => return Err(e),
        },
        None => vec![String::new(), String::new()],
    };
    Ok((bound, crossing))
}

fn sweep(cfg: &ExperimentConfig) -> Result<String> {
    let cap = capacity_fn(cfg)?;
    let axes: Vec<(String, Vec<f64>)> = cfg
        .grid
        .iter()
        .map(|a| (a.name.clone(), a.values()))
        .collect();
    let mut columns: Vec<&str> = axes.iter().map(|(n, _)| n.as_str()).collect();
    columns.extend(BOUND_COLUMNS);
    columns.extend(SWEEP_TAIL);
    let mut table = Table::new("sweep", &columns);
    let base = Point {
        params: cfg.params,
        beta: cfg.beta,
        theta: cfg.theta,
        l: cfg.l,
        kappa: cfg.kappa,
        t_g: cfg.t_g,
    };
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    for flat in 0..total {
        let mut point = base;
        let mut rest = flat;
        let mut coords = Vec::with_capacity(axes.len());
        for (name, values) in axes.iter().rev() {
            let v = values[rest % values.len()];
            rest /= values.len();
            point.set(name, v);
            coords.push(v.to_string());
        }
        coords.reverse();
        let mut row = coords;
        match sweep_row(&point, &cap) {
            Ok((bound, crossing)) => {
                row.extend(bound);
                row.extend(crossing);
                row.push(String::new());
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), BOUND_COLUMNS.len() + 2));
                row.push(e.to_string());
            }
        }
        table.push(row);
    }
    Ok(match cfg.format {
        Format::Csv => table.to_csv(cfg),
        Format::Json => {
            let rows: Vec<serde_json::Map<String, serde_json::Value>> = table
                .rows
                .iter()
                .map(|r| {
                    table
                        .columns
                        .iter()
                        .zip(r)
                        .map(|(c, v)| (c.clone(), serde_json::Value::String(v.clone())))
                        .collect()
                })
                .collect();
            to_json(cfg, &rows)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(args: &[&str]) -> Result<(ExperimentConfig, Outcome)> {
        let mut argv = vec!["qmem"];
        argv.extend(args);
        let cli = Cli::try_parse_from(argv).expect("valid flags");
        let (command, flags) = match cli.command {
            Cmd::Simulate(f) => (Command::Simulate, f),
            Cmd::Exact(f) => (Command::Exact, f),
            Cmd::Meanfield(f) => (Command::Meanfield, f),
            Cmd::Bounds(f) => (Command::Bounds, f),
            Cmd::Couple(f) => (Command::Couple, f),
            Cmd::Sweep(f) => (Command::Sweep, f),
            Cmd::Verify(f) => (Command::Verify, f),
        };
        let cfg = ExperimentConfig::parse(command, None, flags.settings()?)?;
        let out = execute(&cfg)?;
        Ok((cfg, out))
    }

    fn json(args: &[&str]) -> serde_json::Value {
        let (_, out) = exec(args).unwrap();
        serde_json::from_str(&out.body).unwrap()
    }

    #[test]
    fn erasure_overhead_example() {
        let v = json(&[
            "bounds", "--l", "1000", "--p", "0.2", "--alpha", "0.15", "--theta", "1e-6", "--noise",
            "erasure",
        ]);
        let n_min = v["result"]["report"]["n_min"]["value"].as_f64().unwrap();
        assert!((n_min - 2000.0).abs() < 0.1, "{n_min}");
    }

    #[test]
    fn infeasible_meanfield_is_a_verdict() {
        let v = json(&["meanfield", "--p", "0.2", "--alpha", "0.1", "--beta", "0.6"]);
        assert_eq!(v["result"]["crossing"]["kind"], "impossible");
    }

    #[test]
    fn sweep_rows_cover_grid() {
        let (_, out) = exec(&[
            "sweep",
            "--l",
            "100",
            "--theta",
            "0.01",
            "--beta",
            "0.2",
            "--grid",
            "p:0.1:0.3:3",
            "--grid",
            "alpha:0.02:0.06:2",
            "--format",
            "csv",
        ])
        .unwrap();
        let rows = crate::output::read_csv_rows(&out.body);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[1][0], "0.1");
        assert_eq!(rows[1][1], "0.06");
    }
}
