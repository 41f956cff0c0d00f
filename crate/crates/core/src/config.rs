//! Experiment configuration: a `key = value` file merged with command-line
//! overrides and resolved into an [`ExperimentConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::kappa_surface;
use crate::chain::{ModelParams, NoiseKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Exact,
    Meanfield,
    Bounds,
    Couple,
    Sweep,
    Verify,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Exact => "exact",
            Command::Meanfield => "meanfield",
            Command::Bounds => "bounds",
            Command::Couple => "couple",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn format_from_path(path: Option<&Path>) -> Option<Format> {
    path?.extension()?.to_str()?.parse().ok()
}

/// Parameters a sweep axis may vary.
pub const GRID_PARAMS: &[&str] = &["n", "p", "alpha", "q", "beta", "theta", "l", "kappa", "t_g"];

/// `steps` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        let span = self.stop - self.start;
        (0..self.steps)
            .map(|i| self.start + span * i as f64 / (self.steps - 1) as f64)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !GRID_PARAMS.contains(&self.name.as_str()) {
            return Err(Error::Config(format!(
                "grid axis `{}` is not a parameter (expected one of {})",
                self.name,
                GRID_PARAMS.join(", ")
            )));
        }
        if self.steps < 2 {
            return Err(Error::Config(format!(
                "grid axis `{}` needs at least 2 steps",
                self.name
            )));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::Config(format!(
                "grid axis `{}` has a non-finite bound",
                self.name
            )));
        }
        Ok(())
    }
}

impl FromStr for GridAxis {
    type Err = Error;

    /// `name:start:stop:steps`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || {
            Error::Config(format!(
                "grid axis `{s}` is not of the form name:start:stop:steps"
            ))
        };
        if parts.len() != 4 {
            return Err(bad());
        }
        let axis = GridAxis {
            name: parts[0].trim().to_string(),
            start: parts[1].trim().parse().map_err(|_| bad())?,
            stop: parts[2].trim().parse().map_err(|_| bad())?,
            steps: parts[3].trim().parse().map_err(|_| bad())?,
        };
        axis.validate()?;
        Ok(axis)
    }
}

/// Every setting optional; the file and the flags each produce one, and the
/// flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub q: Option<f64>,
    pub q_period: Option<usize>,
    pub noise: Option<NoiseKind>,
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub t_g: Option<f64>,
    pub l: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub n_traj: Option<u64>,
    pub t_max: Option<u64>,
    pub master_seed: Option<u64>,
    pub burn_in: Option<u64>,
    pub t_probe: Option<u64>,
    pub q_low: Option<f64>,
    pub q_high: Option<f64>,
    pub capacity: Option<String>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub grid: Option<Vec<GridAxis>>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

/// `theta` accepts the preset `limit`.
pub const THETA_LIMIT: f64 = 1e-6;

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let value = value.trim().trim_matches('"');
            s.set(key.trim(), value)?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = Some(parse_value(key, value)?),
            "p" => self.p = Some(parse_value(key, value)?),
            "alpha" => self.alpha = Some(parse_value(key, value)?),
            "q" => self.q = Some(parse_value(key, value)?),
            "q_period" => self.q_period = Some(parse_value(key, value)?),
            "noise" => self.noise = Some(NoiseKind::from_str(value).map_err(Error::Config)?),
            "beta" => self.beta = Some(parse_value(key, value)?),
            "theta" => {
                self.theta = Some(if value == "limit" {
                    THETA_LIMIT
                } else {
                    parse_value(key, value)?
                })
            }
            "gamma" => self.gamma = Some(parse_value(key, value)?),
            "kappa" => self.kappa = Some(parse_value(key, value)?),
            "t_g" => self.t_g = Some(parse_value(key, value)?),
            "l" => self.l = Some(parse_value(key, value)?),
            "epsilon" => self.epsilon = Some(parse_value(key, value)?),
            "delta" => self.delta = Some(parse_value(key, value)?),
            "n_traj" => self.n_traj = Some(parse_value(key, value)?),
            "t_max" => self.t_max = Some(parse_value(key, value)?),
            "master_seed" => self.master_seed = Some(parse_value(key, value)?),
            "burn_in" => self.burn_in = Some(parse_value(key, value)?),
            "t_probe" => self.t_probe = Some(parse_value(key, value)?),
            "q_low" => self.q_low = Some(parse_value(key, value)?),
            "q_high" => self.q_high = Some(parse_value(key, value)?),
            "capacity" => self.capacity = Some(value.to_string()),
            "threads" => self.threads = Some(parse_value(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            "format" => self.format = Some(Format::from_str(value).map_err(Error::Config)?),
            "grid" => {
                let axes = value
                    .split(',')
                    .filter(|a| !a.trim().is_empty())
                    .map(GridAxis::from_str)
                    .collect::<Result<Vec<_>>>()?;
                self.grid.get_or_insert_with(Vec::new).extend(axes);
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Values in `overrides` replace those in `self`.
    pub fn merge(self, overrides: Settings) -> Settings {
        Settings {
            n: overrides.n.or(self.n),
            p: overrides.p.or(self.p),
            alpha: overrides.alpha.or(self.alpha),
            q: overrides.q.or(self.q),
            q_period: overrides.q_period.or(self.q_period),
            noise: overrides.noise.or(self.noise),
            beta: overrides.beta.or(self.beta),
            theta: overrides.theta.or(self.theta),
            gamma: overrides.gamma.or(self.gamma),
            kappa: overrides.kappa.or(self.kappa),
            t_g: overrides.t_g.or(self.t_g),
            l: overrides.l.or(self.l),
            epsilon: overrides.epsilon.or(self.epsilon),
            delta: overrides.delta.or(self.delta),
            n_traj: overrides.n_traj.or(self.n_traj),
            t_max: overrides.t_max.or(self.t_max),
            master_seed: overrides.master_seed.or(self.master_seed),
            burn_in: overrides.burn_in.or(self.burn_in),
            t_probe: overrides.t_probe.or(self.t_probe),
            q_low: overrides.q_low.or(self.q_low),
            q_high: overrides.q_high.or(self.q_high),
            capacity: overrides.capacity.or(self.capacity),
            threads: overrides.threads.or(self.threads),
            output: overrides.output.or(self.output),
            format: overrides.format.or(self.format),
            grid: overrides.grid.or(self.grid),
        }
    }
}

/// A fully resolved, validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub params: ModelParams,
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub t_g: Option<f64>,
    pub l: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub n_traj: u64,
    pub t_max: u64,
    pub master_seed: u64,
    pub burn_in: Option<u64>,
    pub t_probe: Option<u64>,
    pub q_low: Option<f64>,
    pub q_high: Option<f64>,
    pub capacity: Option<String>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub grid: Vec<GridAxis>,
}

pub const DEFAULT_N: usize = 100;
pub const DEFAULT_P: f64 = 0.2;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_N_TRAJ: u64 = 10_000;
pub const DEFAULT_T_MAX: u64 = 50;

impl ExperimentConfig {
    pub fn resolve(command: Command, s: Settings) -> Result<Self> {
        let p = match (s.kappa, s.t_g) {
            (Some(kappa), Some(t_g)) => {
                let derived = kappa_surface(kappa, t_g, s.noise.unwrap_or(NoiseKind::Erasure))?.p;
                if let Some(given) = s.p {
                    if (given - derived).abs() > 1e-12 {
                        return Err(Error::Config(format!(
                            "`p` = {given} conflicts with 1 - exp(-kappa t_g) = {derived}"
                        )));
                    }
                }
                derived
            }
            _ => s.p.unwrap_or(DEFAULT_P),
        };
        let params = ModelParams {
            n: s.n.unwrap_or(DEFAULT_N),
            p,
            alpha: s.alpha.unwrap_or(DEFAULT_ALPHA),
            q: s.q.unwrap_or(0.0),
            q_period: s.q_period.unwrap_or(1),
            noise: s.noise.unwrap_or(NoiseKind::Erasure),
        };
        params.validate()?;
        let format = s
            .format
            .or_else(|| format_from_path(s.output.as_deref()))
            .unwrap_or_default();
        let grid = s.grid.unwrap_or_default();
        for axis in &grid {
            axis.validate()?;
        }
        if command == Command::Sweep && grid.is_empty() {
            return Err(Error::Config("sweep needs at least one `grid` axis".into()));
        }
        let cfg = ExperimentConfig {
            command,
            params,
            beta: s.beta,
            theta: s.theta,
            gamma: s.gamma,
            kappa: s.kappa,
            t_g: s.t_g,
            l: s.l,
            epsilon: s.epsilon,
            delta: s.delta,
            n_traj: s.n_traj.unwrap_or(DEFAULT_N_TRAJ),
            t_max: s.t_max.unwrap_or(DEFAULT_T_MAX),
            master_seed: s.master_seed.unwrap_or(0),
            burn_in: s.burn_in,
            t_probe: s.t_probe,
            q_low: s.q_low,
            q_high: s.q_high,
            capacity: s.capacity,
            threads: s.threads,
            output: s.output,
            format,
            grid,
        };
        if cfg.n_traj == 0 {
            return Err(Error::Config("`n_traj` must be at least 1".into()));
        }
        if cfg.t_max == 0 {
            return Err(Error::Config("`t_max` must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// Parses a config file (`key = value`) and applies flag overrides.
    pub fn parse(command: Command, file_text: Option<&str>, overrides: Settings) -> Result<Self> {
        let base = match file_text {
            Some(text) => Settings::from_kv_text(text)?,
            None => Settings::default(),
        };
        Self::resolve(command, base.merge(overrides))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.params.validate()?;
        for axis in &cfg.grid {
            axis.validate()?;
        }
        Ok(cfg)
    }

    /// A required optional field, or a usage error naming it.
    pub fn require(value: Option<f64>, name: &str) -> Result<f64> {
        value.ok_or_else(|| Error::Config(format!("`{name}` is required for this command")))
    }
}
