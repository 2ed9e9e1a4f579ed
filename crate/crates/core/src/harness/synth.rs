//! Synthetic workload curves with a prescribed mean and peak-to-mean ratio.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::workload::WorkloadCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Daily cycle starting at its trough.
    Sinusoid,
    /// Low base with random bursts.
    Bursty,
    /// On/off square wave.
    Step,
}

/// `kind[:key=value,...]` with keys `mean`, `pmr`, `period`, `horizon`,
/// `noise` and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub mean: f64,
    pub pmr: f64,
    pub period: usize,
    pub horizon: usize,
    /// Relative amplitude of uniform noise applied to the shape.
    pub noise: f64,
    /// Overrides the experiment seed when set.
    pub seed: Option<u64>,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, mean: f64, pmr: f64) -> Self {
        Self {
            kind,
            mean,
            pmr,
            period: 288,
            horizon: 288,
            noise: 0.0,
            seed: None,
        }
    }
}

impl FromStr for SynthSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = match kind.trim() {
            "sinusoid" => SynthKind::Sinusoid,
            "bursty" => SynthKind::Bursty,
            "step" => SynthKind::Step,
            other => {
                return Err(Error::Config(format!(
                    "unknown synthetic kind '{other}' (sinusoid, bursty, step)"
                )))
            }
        };
        let mut spec = SynthSpec::new(kind, 10.0, 3.0);
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("synthetic: expected key=value, got '{part}'")))?;
            let bad = || Error::Config(format!("synthetic: cannot parse {k}={v}"));
            let v = v.trim();
            match k.trim() {
                "mean" => spec.mean = v.parse().map_err(|_| bad())?,
                "pmr" => spec.pmr = v.parse().map_err(|_| bad())?,
                "period" => spec.period = v.parse().map_err(|_| bad())?,
                "horizon" => spec.horizon = v.parse().map_err(|_| bad())?,
                "noise" => spec.noise = v.parse().map_err(|_| bad())?,
                "seed" => spec.seed = Some(v.parse().map_err(|_| bad())?),
                other => return Err(Error::Config(format!("synthetic: unknown key '{other}'"))),
            }
        }
        Ok(spec)
    }
}

fn raw_shape(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = spec.period.max(1) as f64;
    let mut shape: Vec<f64> = match spec.kind {
        SynthKind::Sinusoid => (0..spec.horizon)
            .map(|t| 0.5 * (1.0 + (2.0 * PI * t as f64 / period - PI / 2.0).sin()))
            .collect(),
        SynthKind::Step => {
            let on = ((period / spec.pmr).floor() as usize).max(1);
            (0..spec.horizon)
                .map(|t| if t % spec.period.max(1) < on { 1.0 } else { 0.0 })
                .collect()
        }
        SynthKind::Bursty => {
            let mut v = vec![0.0; spec.horizon];
            let mut t = 0;
            while t < spec.horizon {
                if rng.gen_bool(0.05) {
                    let len = rng.gen_range(1..=6);
                    let height = rng.gen_range(0.5..=1.0);
                    for slot in v.iter_mut().skip(t).take(len) {
                        *slot = height;
                    }
                    t += len;
                } else {
                    t += 1;
                }
            }
            v
        }
    };
    if spec.noise > 0.0 {
        for v in shape.iter_mut() {
            *v = (*v * (1.0 + spec.noise * rng.gen_range(-1.0..=1.0))).max(0.0);
        }
    }
    let (lo, hi) = shape
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        shape.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    } else {
        shape.iter_mut().for_each(|v| *v = 0.0);
    }
    shape
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Builds a nonnegative curve with exactly the requested sample mean and
/// peak. A `[0, 1]` shape `s` with mean `μ ≤ 1/pmr` becomes `a + b·s`;
/// otherwise it is sharpened to `s^γ` with `γ` chosen by bisection so that
/// its mean is `1/pmr`, then scaled.
pub fn synth_workload(spec: &SynthSpec, seed: u64, fleet: Option<f64>) -> Result<WorkloadCurve<f64>> {
    if !(spec.mean > 0.0) || !spec.mean.is_finite() {
        return Err(Error::invalid("synthetic mean must be positive"));
    }
    if !(spec.pmr >= 1.0) || !spec.pmr.is_finite() {
        return Err(Error::invalid("synthetic peak-to-mean ratio must be at least 1"));
    }
    if spec.horizon == 0 || spec.period == 0 {
        return Err(Error::invalid("synthetic horizon and period must be positive"));
    }
    if !(0.0..1.0).contains(&spec.noise) {
        return Err(Error::invalid("synthetic noise must lie in [0, 1)"));
    }
    let peak = spec.mean * spec.pmr;
    if let Some(m) = fleet {
        if peak > m {
            log::warn!("synthetic peak {peak} exceeds fleet {m}; the instance may be infeasible");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(seed));
    let shape = raw_shape(spec, &mut rng);
    let mu = mean(&shape);
    let target = 1.0 / spec.pmr;
    let values = if spec.pmr == 1.0 {
        vec![spec.mean; spec.horizon]
    } else if mu == 0.0 {
        return Err(Error::invalid("synthetic shape is flat; use pmr = 1"));
    } else if mu <= target {
        let b = spec.mean * (spec.pmr - 1.0) / (1.0 - mu);
        let a = peak - b;
        shape.iter().map(|&s| a + b * s).collect()
    } else {
        let sharpened = |g: f64| mean(&shape.iter().map(|s| s.powf(g)).collect::<Vec<_>>());
        let (mut lo, mut hi) = (1.0, 2.0);
        while sharpened(hi) > target {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::invalid(format!(
                    "cannot reach peak-to-mean ratio {} with this shape",
                    spec.pmr
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sharpened(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let g = 0.5 * (lo + hi);
        let s: Vec<f64> = shape.iter().map(|s| s.powf(g)).collect();
        let scale = spec.mean / mean(&s);
        s.iter().map(|v| v * scale).collect()
    };
    Ok(WorkloadCurve::new(values, 300.0))
}
