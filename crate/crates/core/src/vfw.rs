//! Valley-filling online provisioning for a uniform deadline `D`.
//!
//! Each slot solves a window program over `m_t..m_{t+D}` and commits only
//! `m_t`, executing `x_t = m_t`. Outside valleys the window executes the
//! δ-delayed curve; inside a valley, and over the final `D + 1` slots, it
//! executes everything released so far.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::offline::{CapacitySchedule, CostParams, Provenance};
use crate::scalar::Scalar;
use crate::window::WindowProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VfwConfig {
    pub deadline: usize,
    pub delta: usize,
    /// Enforce the deadline curve at every window slot instead of only the
    /// committed one.
    pub window_deadlines: bool,
}

impl VfwConfig {
    pub fn new(deadline: usize, delta: usize) -> Self {
        Self {
            deadline,
            delta,
            window_deadlines: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta == 0 || self.delta >= self.deadline {
            return Err(Error::invalid(format!(
                "lookahead must satisfy 0 < delta < D (delta={}, D={})",
                self.delta, self.deadline
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepMode {
    #[serde(rename = "LOPT")]
    Lopt,
    #[serde(rename = "VOPT")]
    Vopt,
    #[serde(rename = "FLUSH")]
    Flush,
}

impl StepMode {
    pub fn label(self) -> &'static str {
        match self {
            StepMode::Lopt => "LOPT",
            StepMode::Vopt => "VOPT",
            StepMode::Flush => "FLUSH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VfwStep<T> {
    pub slot: usize,
    pub mode: StepMode,
    pub m: T,
    pub x: T,
    /// Released but not yet executed work after this slot.
    pub backlog: T,
    /// Area under the δ-delayed curve when an intersection was examined.
    pub area: Option<T>,
}

/// `Σ_j (seg_j − seg_0)`.
pub fn valley_area<T: Scalar>(segment: &[T]) -> T {
    match segment.first() {
        Some(&base) => segment.iter().map(|&v| v - base).sum(),
        None => T::zero(),
    }
}

pub fn detect_valley<T: Scalar>(segment: &[T]) -> bool {
    valley_area(segment) < T::zero()
}

fn sign<T: Scalar>(v: T) -> i8 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        -1
    } else {
        0
    }
}

/// Slot-by-slot VFW state over a zero-padded horizon `T + D`.
#[derive(Debug, Clone)]
pub struct VfwRunner<T> {
    config: VfwConfig,
    params: CostParams<T>,
    load: Vec<T>,
    cum_load: Vec<T>,
    released_slots: usize,
    t: usize,
    committed: T,
    prev_m: T,
    valley: usize,
    last_sign: i8,
    history: Vec<T>,
}

impl<T: Scalar> VfwRunner<T> {
    pub fn new(load: &[T], config: VfwConfig, params: CostParams<T>) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let tol = T::check_tolerance();
        if let Some(t) = load.iter().position(|&l| l < T::zero() || l > params.fleet + tol || !l.is_finite()) {
            return Err(Error::invalid(format!(
                "load at slot {t} is {} but must lie in [0, {}]",
                load[t], params.fleet
            )));
        }
        let mut padded = load.to_vec();
        padded.resize(load.len() + config.deadline, T::zero());
        let mut cum_load = Vec::with_capacity(padded.len());
        let mut acc = T::zero();
        for &l in &padded {
            acc = acc + l;
            cum_load.push(acc);
        }
        Ok(Self {
            config,
            params,
            load: padded,
            cum_load,
            released_slots: load.len(),
            t: 0,
            committed: T::zero(),
            prev_m: T::zero(),
            valley: 0,
            last_sign: 0,
            history: Vec::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.load.len()
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.horizon()
    }

    fn cum(&self, t: isize) -> T {
        if t < 0 {
            T::zero()
        } else {
            self.cum_load[t as usize]
        }
    }

    fn delayed(&self, t: usize) -> T {
        if t >= self.config.delta {
            self.load[t - self.config.delta]
        } else {
            T::zero()
        }
    }

    /// Runs the valley state machine for slot `t` and reports the area when
    /// an intersection was examined.
    fn update_valley(&mut self, t: usize) -> Option<T> {
        let s = sign(self.load[t] - self.delayed(t));
        let crossed = s != 0 && self.last_sign != 0 && s != self.last_sign;
        if s != 0 {
            self.last_sign = s;
        }
        let mut area = None;
        if self.valley == 0 && crossed {
            let segment: Vec<T> = (t..=t + self.config.delta).map(|j| self.delayed(j)).collect();
            let a = valley_area(&segment);
            if a < T::zero() {
                self.valley = 1;
            }
            area = Some(a);
        } else if self.valley > 0 && self.valley <= self.config.delta {
            self.valley += 1;
        } else {
            self.valley = 0;
        }
        area
    }

    /// Window program that slot `t` would solve in `mode`, given the
    /// capacities committed so far.
    pub fn program(&self, mode: StepMode) -> WindowProgram<T> {
        let t = self.t;
        let d = self.config.deadline;
        let ti = t as isize;
        let reference = match mode {
            StepMode::Lopt => self.cum(ti - self.config.delta as isize),
            _ => self.cum(ti),
        };
        let total = (reference - self.committed).max(T::zero());
        let width = match mode {
            StepMode::Flush => (d + 1).min(self.horizon() - t),
            _ => d + 1,
        };
        let due = |j: usize| (self.cum(ti + j as isize - d as isize) - self.committed).max(T::zero()).min(total);
        let prefix: Vec<T> = if self.config.window_deadlines {
            (0..width).map(due).collect()
        } else {
            vec![due(0)]
        };
        WindowProgram {
            width,
            prev: self.prev_m,
            total,
            prefix,
            fleet: self.params.fleet,
            energy: self.params.energy(),
            beta: self.params.beta,
        }
    }

    pub fn step(&mut self) -> Result<VfwStep<T>> {
        let t = self.t;
        if t >= self.horizon() {
            return Err(Error::invalid("schedule already complete"));
        }
        let area = self.update_valley(t);
        let mode = if t + 1 >= self.released_slots {
            StepMode::Flush
        } else if self.valley > 0 {
            StepMode::Vopt
        } else {
            StepMode::Lopt
        };
        let plan = self.program(mode).solve().map_err(|e| Error::Consistency {
            slot: t,
            detail: format!("{} step failed: {e}", mode.label()),
        })?;
        let m = plan.m[0].max(T::zero()).min(self.params.fleet);
        self.committed = self.committed + m;
        self.prev_m = m;
        self.history.push(m);
        self.t += 1;
        Ok(VfwStep {
            slot: t,
            mode,
            m,
            x: m,
            backlog: (self.cum(t as isize) - self.committed).max(T::zero()),
            area,
        })
    }

    pub fn schedule(&self) -> CapacitySchedule<T> {
        CapacitySchedule {
            m: self.history.clone(),
            x: self.history.clone(),
            by_deadline: None,
            provenance: Provenance::Vfw,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VfwOutcome<T> {
    pub schedule: CapacitySchedule<T>,
    pub steps: Vec<VfwStep<T>>,
}

/// Runs VFW(δ) over `load`, returning a schedule on the horizon `T + D`.
pub fn run_vfw<T: Scalar>(load: &[T], config: VfwConfig, params: &CostParams<T>) -> Result<VfwOutcome<T>> {
    let mut runner = VfwRunner::new(load, config, *params)?;
    let mut steps = Vec::with_capacity(runner.horizon());
    while !runner.is_done() {
        steps.push(runner.step()?);
    }
    Ok(VfwOutcome {
        schedule: runner.schedule(),
        steps,
    })
}

/// `t,mode,m,x,backlog` CSV with 1-based slots.
pub fn write_steps_csv<T: Scalar, W: Write>(steps: &[VfwStep<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mode", "m", "x", "backlog"])?;
    for s in steps {
        w.write_record([
            (s.slot + 1).to_string(),
            s.mode.label().to_string(),
            s.m.to_string(),
            s.x.to_string(),
            s.backlog.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
