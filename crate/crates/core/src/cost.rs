//! Cost accounting, the competitive bound and the machine power model.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offline::{CapacitySchedule, CostParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport<T> {
    pub operating_cost: T,
    pub switching_cost: T,
    pub total_cost: T,
    pub savings_vs_baseline: T,
    pub load_total: T,
    /// `total / ((e0 + e1)·ΣL)`.
    pub bound_ratio: T,
    /// `(e0 + e1 + 2β) / (e0 + e1)`.
    pub bound_limit: T,
}

/// Operating cost `Σ(e0·m + e1·x)` and switching cost `βΣ|m_t − m_{t−1}|`
/// with the fleet starting empty.
pub fn schedule_costs<T: Scalar>(s: &CapacitySchedule<T>, p: &CostParams<T>) -> (T, T) {
    let mut operating = T::zero();
    let mut switching = T::zero();
    let mut prev = T::zero();
    for (&m, &x) in s.m.iter().zip(&s.x) {
        operating = operating + p.e0 * m + p.e1 * x;
        switching = switching + (m - prev).abs();
        prev = m;
    }
    (operating, p.beta * switching)
}

pub fn cost_report<T: Scalar>(
    s: &CapacitySchedule<T>,
    load: &[T],
    p: &CostParams<T>,
    baseline: &CapacitySchedule<T>,
) -> Result<CostReport<T>> {
    if s.horizon() != baseline.horizon() {
        return Err(Error::HorizonMismatch(s.horizon(), baseline.horizon()));
    }
    let (operating, switching) = schedule_costs(s, p);
    let total = operating + switching;
    let (bo, bs) = schedule_costs(baseline, p);
    let base_total = bo + bs;
    let savings = if base_total > T::zero() {
        T::one() - total / base_total
    } else {
        T::zero()
    };
    let load_total: T = load.iter().copied().sum();
    let energy = p.energy();
    let bound_ratio = if load_total > T::zero() {
        total / (energy * load_total)
    } else {
        T::zero()
    };
    Ok(CostReport {
        operating_cost: operating,
        switching_cost: switching,
        total_cost: total,
        savings_vs_baseline: savings,
        load_total,
        bound_ratio,
        bound_limit: (energy + p.beta + p.beta) / energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck<T> {
    pub passed: bool,
    pub ratio: T,
    pub limit: T,
}

/// Passes iff `total ≤ (e0 + e1 + 2β)·ΣL`, up to rounding.
pub fn check_competitive_bound<T: Scalar>(report: &CostReport<T>, p: &CostParams<T>) -> BoundCheck<T> {
    let allowed = (p.energy() + p.beta + p.beta) * report.load_total;
    let slack = T::lp_tolerance() * allowed.max(T::one());
    BoundCheck {
        passed: report.total_cost <= allowed + slack,
        ratio: report.bound_ratio,
        limit: report.bound_limit,
    }
}

/// `βΣ|m_t − m_{t−1}| ≤ βΣ(m_t + m_{t−1}) ≤ 2βΣm`, compared term by term so
/// rounding cannot flip the result.
pub fn switching_bound_holds<T: Scalar>(s: &CapacitySchedule<T>, p: &CostParams<T>) -> bool {
    let mut lhs = T::zero();
    let mut rhs = T::zero();
    let mut prev = T::zero();
    for &m in &s.m {
        lhs = lhs + (m - prev).abs();
        rhs = rhs + (m + prev);
        prev = m;
    }
    p.beta * lhs <= p.beta * rhs
}

/// Linear power model parameters in Watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub alpha_cpu: f64,
    pub alpha_disk: f64,
    pub alpha_dops: f64,
    pub alpha_net: f64,
    pub gamma_cpu: f64,
    pub gamma_disk: f64,
    pub gamma_dops: f64,
    pub gamma_net: f64,
}

impl PowerParams {
    /// Fitted values for a small cloud instance.
    pub fn reference_server() -> Self {
        Self {
            alpha_cpu: 25.70,
            alpha_disk: 7.21,
            alpha_dops: 0.0,
            alpha_net: 0.66,
            gamma_cpu: 60.30,
            gamma_disk: 0.0,
            gamma_dops: 0.0,
            gamma_net: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_cpu,
            self.alpha_disk,
            self.alpha_dops,
            self.alpha_net,
            self.gamma_cpu,
            self.gamma_disk,
            self.gamma_dops,
            self.gamma_net,
        ];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("power parameters must be finite and nonnegative"))
        }
    }

    pub fn idle(&self) -> f64 {
        self.gamma_cpu + self.gamma_disk + self.gamma_dops + self.gamma_net
    }
}

impl Default for PowerParams {
    fn default() -> Self {
        Self::reference_server()
    }
}

/// One machine during one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub slot: usize,
    pub machine_id: String,
    pub u_cpu: f64,
    pub disk_bytes: f64,
    pub disk_ops: f64,
    pub net_bytes: f64,
}

impl MetricRecord {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.u_cpu) {
            return Err(Error::invalid(format!(
                "cpu utilization {} of {} at slot {} outside [0, 1]",
                self.u_cpu, self.machine_id, self.slot
            )));
        }
        if [self.disk_bytes, self.disk_ops, self.net_bytes]
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "negative counter for {} at slot {}",
                self.machine_id, self.slot
            )));
        }
        Ok(())
    }
}

/// Normalizing maxima of the raw counters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CounterMaxima {
    pub disk_bytes: f64,
    pub disk_ops: f64,
    pub net_bytes: f64,
}

impl CounterMaxima {
    pub fn of(records: &[MetricRecord]) -> Self {
        records.iter().fold(Self::default(), |acc, r| acc.merge(&Self {
            disk_bytes: r.disk_bytes,
            disk_ops: r.disk_ops,
            net_bytes: r.net_bytes,
        }))
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            disk_bytes: self.disk_bytes.max(other.disk_bytes),
            disk_ops: self.disk_ops.max(other.disk_ops),
            net_bytes: self.net_bytes.max(other.net_bytes),
        }
    }
}

fn normalized(v: f64, max: f64) -> f64 {
    if max > 0.0 {
        v / max
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotEnergy {
    pub slot: usize,
    pub machines: usize,
    pub mean_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub energy_wh: f64,
    pub machine_slots: usize,
    pub mean_cpu_util: f64,
    pub disk_bytes: f64,
    pub disk_ops: f64,
    pub net_bytes: f64,
    pub maxima: CounterMaxima,
    pub per_slot: Vec<SlotEnergy>,
}

pub fn machine_power(r: &MetricRecord, pp: &PowerParams, maxima: &CounterMaxima) -> f64 {
    pp.alpha_cpu * r.u_cpu
        + pp.alpha_disk * normalized(r.disk_bytes, maxima.disk_bytes)
        + pp.alpha_dops * normalized(r.disk_ops, maxima.disk_ops)
        + pp.alpha_net * normalized(r.net_bytes, maxima.net_bytes)
        + pp.idle()
}

/// Watt-hours consumed, normalizing counters by their maxima over `records`.
pub fn energy_from_metrics(records: &[MetricRecord], pp: &PowerParams, slot_seconds: f64) -> Result<EnergyReport> {
    energy_with_maxima(records, pp, slot_seconds, &CounterMaxima::of(records))
}

/// As [`energy_from_metrics`], with externally chosen maxima so several runs
/// share one normalization.
pub fn energy_with_maxima(
    records: &[MetricRecord],
    pp: &PowerParams,
    slot_seconds: f64,
    maxima: &CounterMaxima,
) -> Result<EnergyReport> {
    pp.validate()?;
    if !(slot_seconds > 0.0) {
        return Err(Error::invalid("slot length must be positive"));
    }
    let mut per_slot: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut report = EnergyReport {
        energy_wh: 0.0,
        machine_slots: records.len(),
        mean_cpu_util: 0.0,
        disk_bytes: 0.0,
        disk_ops: 0.0,
        net_bytes: 0.0,
        maxima: *maxima,
        per_slot: Vec::new(),
    };
    let mut watts = 0.0;
    for r in records {
        r.validate()?;
        let p = machine_power(r, pp, maxima);
        watts += p;
        let e = per_slot.entry(r.slot).or_default();
        e.0 += 1;
        e.1 += p;
        report.mean_cpu_util += r.u_cpu;
        report.disk_bytes += r.disk_bytes;
        report.disk_ops += r.disk_ops;
        report.net_bytes += r.net_bytes;
    }
    report.energy_wh = watts * slot_seconds / 3600.0;
    if !records.is_empty() {
        report.mean_cpu_util /= records.len() as f64;
    }
    report.per_slot = per_slot
        .into_iter()
        .map(|(slot, (machines, w))| SlotEnergy {
            slot,
            machines,
            mean_power_w: w / machines as f64,
        })
        .collect();
    Ok(report)
}

pub fn read_metrics_csv<R: Read>(source: R) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let r: MetricRecord = row?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_metrics_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Counter volume generated per server-slot of executed work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricScale {
    pub disk_bytes: f64,
    pub disk_ops: f64,
    pub net_bytes: f64,
}

impl Default for MetricScale {
    fn default() -> Self {
        Self {
            disk_bytes: 4.0 * 1024.0 * 1024.0 * 1024.0,
            disk_ops: 60_000.0,
            net_bytes: 1024.0 * 1024.0 * 1024.0,
        }
    }
}

/// Per-machine metrics implied by a schedule: `⌈m_t⌉` machines share `x_t`
/// evenly, and counters scale with the work each one runs.
pub fn synthetic_metrics<T: Scalar>(s: &CapacitySchedule<T>, scale: &MetricScale) -> Vec<MetricRecord> {
    let tol = T::check_tolerance().as_f64();
    let mut out = Vec::new();
    for (t, (&m, &x)) in s.m.iter().zip(&s.x).enumerate() {
        let machines = (m.as_f64() - tol).ceil().max(0.0) as usize;
        if machines == 0 {
            continue;
        }
        let share = (x.as_f64().max(0.0) / machines as f64).min(1.0);
        for i in 0..machines {
            out.push(MetricRecord {
                slot: t + 1,
                machine_id: format!("m{:03}", i + 1),
                u_cpu: share,
                disk_bytes: share * scale.disk_bytes,
                disk_ops: share * scale.disk_ops,
                net_bytes: share * scale.net_bytes,
            });
        }
    }
    out
}

/// Tidy comparison table: one row per (metric, algorithm) with the reduction
/// against `baseline` in percent.
pub fn write_energy_table<W: Write>(rows: &[(String, EnergyReport)], baseline: &str, out: W) -> Result<()> {
    let base = rows
        .iter()
        .find(|(name, _)| name == baseline)
        .map(|(_, r)| r)
        .ok_or_else(|| Error::invalid(format!("baseline {baseline} missing from energy table")))?;
    let metrics: [(&str, fn(&EnergyReport) -> f64); 6] = [
        ("energy_wh", |r| r.energy_wh),
        ("machine_slots", |r| r.machine_slots as f64),
        ("mean_cpu_util", |r| r.mean_cpu_util),
        ("disk_bytes", |r| r.disk_bytes),
        ("disk_ops", |r| r.disk_ops),
        ("net_bytes", |r| r.net_bytes),
    ];
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "algorithm", "value", "reduction_pct"])?;
    for (metric, get) in metrics {
        let b = get(base);
        for (name, r) in rows {
            let v = get(r);
            let reduction = if b != 0.0 { 100.0 * (b - v) / b } else { 0.0 };
            w.write_record([metric.to_string(), name.clone(), v.to_string(), reduction.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
