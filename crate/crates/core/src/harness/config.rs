//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key can also be set from
//! the command line through [`ExperimentConfig::set`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::cost::PowerParams;
use crate::error::{Error, Result};
use crate::estimation::EstimationParams;
use crate::offline::CostParams;
use crate::prep::DeadlineOrdering;

use super::synth::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Offline,
    Vfw,
    Gcp,
    Follow,
    #[serde(rename = "none")]
    NoProvisioning,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Offline,
        Algorithm::Vfw,
        Algorithm::Gcp,
        Algorithm::Follow,
        Algorithm::NoProvisioning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Offline => "offline",
            Algorithm::Vfw => "vfw",
            Algorithm::Gcp => "gcp",
            Algorithm::Follow => "follow",
            Algorithm::NoProvisioning => "none",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses one algorithm name or `all`.
pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            return Ok(Algorithm::ALL.to_vec());
        }
        let a = Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == part)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{part}' (offline, vfw, gcp, follow, none, all)")))?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no algorithm selected".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadlineMode {
    /// Every job gets the configured deadline `D`.
    Uniform,
    /// Deadlines come from k-means classes over the deadline pool.
    Classes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LongJobPolicy {
    /// A job of `ℓ` slots adds one unit to each of `ℓ` consecutive slots.
    Spread,
    Preemptive,
    /// Continuations are released once GCP has run the head; the other
    /// algorithms see the preemptive split.
    Nonpreemptive,
}

fn keyword<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("{key}: expected one of {}, got '{value}'", names.join(", ")))
        })
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub slot_seconds: f64,
    /// Slots of released load; traces default to the last release.
    pub horizon: Option<usize>,
    /// Defaults to the peak of the released curve, rounded up.
    pub fleet: Option<f64>,
    pub e0: f64,
    pub e1: f64,
    pub beta: f64,
    pub algorithms: Vec<Algorithm>,
    pub deadline: usize,
    /// Defaults to `⌊D/2⌋`.
    pub delta: Option<usize>,
    pub k: usize,
    /// Defaults to `1..=k`.
    pub deadline_pool: Option<Vec<usize>>,
    pub deadline_mode: DeadlineMode,
    pub deadline_ordering: DeadlineOrdering,
    pub long_jobs: LongJobPolicy,
    pub window_deadlines: bool,
    pub server_capacity: f64,
    pub seed: u64,
    pub trace: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
    pub sweep_min: usize,
    pub sweep_max: usize,
    pub estimation: EstimationParams<f64>,
    pub power: PowerParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            slot_seconds: 300.0,
            horizon: None,
            fleet: None,
            e0: 1.0,
            e1: 0.0,
            beta: 12.0,
            algorithms: Algorithm::ALL.to_vec(),
            deadline: 6,
            delta: None,
            k: 10,
            deadline_pool: None,
            deadline_mode: DeadlineMode::Uniform,
            deadline_ordering: DeadlineOrdering::Population,
            long_jobs: LongJobPolicy::Spread,
            window_deadlines: false,
            server_capacity: 1.0,
            seed: 1,
            trace: None,
            synthetic: None,
            sweep_min: 1,
            sweep_max: 12,
            estimation: EstimationParams::default(),
            power: PowerParams::reference_server(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "slot_seconds",
    "horizon",
    "fleet",
    "e0",
    "e1",
    "beta",
    "algorithm",
    "deadline",
    "delta",
    "k",
    "deadline_pool",
    "deadline_mode",
    "deadline_ordering",
    "long_jobs",
    "window_deadlines",
    "server_capacity",
    "seed",
    "trace",
    "synthetic",
    "sweep_min",
    "sweep_max",
    "read_rate",
    "write_rate",
    "network_rate",
    "map_slope",
    "reduce_slope",
    "block_mb",
    "max_map_slots",
    "max_reduce_slots",
    "alpha_cpu",
    "alpha_disk",
    "alpha_dops",
    "alpha_net",
    "gamma_cpu",
    "gamma_disk",
    "gamma_dops",
    "gamma_net",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt = |v: &str| !matches!(v, "" | "auto");
        match key {
            "slot_seconds" => self.slot_seconds = number(key, value)?,
            "horizon" => self.horizon = if opt(value) { Some(number(key, value)?) } else { None },
            "fleet" => self.fleet = if opt(value) { Some(number(key, value)?) } else { None },
            "e0" => self.e0 = number(key, value)?,
            "e1" => self.e1 = number(key, value)?,
            "beta" => self.beta = number(key, value)?,
            "algorithm" => self.algorithms = parse_algorithms(value)?,
            "deadline" => self.deadline = number(key, value)?,
            "delta" => self.delta = if opt(value) { Some(number(key, value)?) } else { None },
            "k" => self.k = number(key, value)?,
            "deadline_pool" => {
                self.deadline_pool = if opt(value) {
                    Some(
                        value
                            .split(',')
                            .map(|v| number(key, v.trim()))
                            .collect::<Result<Vec<usize>>>()?,
                    )
                } else {
                    None
                }
            }
            "deadline_mode" => {
                self.deadline_mode = keyword(key, value, &[("uniform", DeadlineMode::Uniform), ("classes", DeadlineMode::Classes)])?
            }
            "deadline_ordering" => {
                self.deadline_ordering = keyword(
                    key,
                    value,
                    &[("population", DeadlineOrdering::Population), ("size", DeadlineOrdering::Size)],
                )?
            }
            "long_jobs" => {
                self.long_jobs = keyword(
                    key,
                    value,
                    &[
                        ("spread", LongJobPolicy::Spread),
                        ("preemptive", LongJobPolicy::Preemptive),
                        ("nonpreemptive", LongJobPolicy::Nonpreemptive),
                    ],
                )?
            }
            "window_deadlines" => self.window_deadlines = keyword(key, value, &[("true", true), ("false", false)])?,
            "server_capacity" => self.server_capacity = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "trace" => self.trace = if opt(value) { Some(PathBuf::from(value)) } else { None },
            "synthetic" => self.synthetic = if opt(value) { Some(value.parse()?) } else { None },
            "sweep_min" => self.sweep_min = number(key, value)?,
            "sweep_max" => self.sweep_max = number(key, value)?,
            "read_rate" => self.estimation.read_rate = number(key, value)?,
            "write_rate" => self.estimation.write_rate = number(key, value)?,
            "network_rate" => self.estimation.network_rate = number(key, value)?,
            "map_slope" => self.estimation.map_slope = number(key, value)?,
            "reduce_slope" => self.estimation.reduce_slope = number(key, value)?,
            "block_mb" => self.estimation.block_mb = number(key, value)?,
            "max_map_slots" => self.estimation.max_map_slots = number(key, value)?,
            "max_reduce_slots" => self.estimation.max_reduce_slots = number(key, value)?,
            "alpha_cpu" => self.power.alpha_cpu = number(key, value)?,
            "alpha_disk" => self.power.alpha_disk = number(key, value)?,
            "alpha_dops" => self.power.alpha_dops = number(key, value)?,
            "alpha_net" => self.power.alpha_net = number(key, value)?,
            "gamma_cpu" => self.power.gamma_cpu = number(key, value)?,
            "gamma_disk" => self.power.gamma_disk = number(key, value)?,
            "gamma_dops" => self.power.gamma_dops = number(key, value)?,
            "gamma_net" => self.power.gamma_net = number(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn delta_for(&self, deadline: usize) -> usize {
        self.delta.unwrap_or(deadline / 2)
    }

    pub fn pool(&self) -> Vec<usize> {
        self.deadline_pool.clone().unwrap_or_else(|| (1..=self.k).collect())
    }

    pub fn cost_params(&self, fleet: f64) -> CostParams<f64> {
        CostParams {
            e0: self.e0,
            e1: self.e1,
            beta: self.beta,
            fleet,
            slot_seconds: self.slot_seconds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slot_seconds > 0.0) {
            return Err(Error::Config("slot_seconds must be positive".into()));
        }
        if self.trace.is_some() == self.synthetic.is_some() {
            return Err(Error::Config("exactly one of trace or synthetic must be given".into()));
        }
        if !(self.server_capacity > 0.0) {
            return Err(Error::Config("server_capacity must be positive".into()));
        }
        if let Some(f) = self.fleet {
            if !(f > 0.0) {
                return Err(Error::Config("fleet must be positive".into()));
            }
        }
        self.cost_params(1.0).validate().map_err(|e| Error::Config(e.to_string()))?;
        self.estimation.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.power.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.deadline_mode == DeadlineMode::Classes {
            if self.synthetic.is_some() {
                return Err(Error::Config("deadline classes need a job trace".into()));
            }
            if self.pool().len() != self.k {
                return Err(Error::Config(format!(
                    "deadline pool has {} values but k = {}",
                    self.pool().len(),
                    self.k
                )));
            }
        }
        let explicit_vfw = self.algorithms == [Algorithm::Vfw];
        if explicit_vfw {
            if self.deadline_mode == DeadlineMode::Classes {
                return Err(Error::Config("vfw needs deadline_mode = uniform".into()));
            }
            let delta = self.delta_for(self.deadline);
            if delta == 0 || delta >= self.deadline {
                return Err(Error::Config(format!(
                    "vfw needs 0 < delta < D (delta={delta}, D={})",
                    self.deadline
                )));
            }
        }
        if self.sweep_min > self.sweep_max {
            return Err(Error::Config("sweep_min exceeds sweep_max".into()));
        }
        Ok(())
    }
}
