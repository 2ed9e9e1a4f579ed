//! Jobs, per-slot workload curves and their delayed variants.
//!
//! Slots are 0-based indices internally; slot `i` covers
//! `[i·τ, (i+1)·τ)` seconds from the experiment start.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BYTES_PER_MB: f64 = 1024.0 * 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Job {
    pub id: String,
    pub release_time: f64,
    pub input_bytes: f64,
    pub shuffle_bytes: f64,
    pub output_bytes: f64,
    pub deadline_slots: Option<usize>,
    pub length_slots: Option<usize>,
}

impl Job {
    pub fn new(id: impl Into<String>, release_time: f64, input: f64, shuffle: f64, output: f64) -> Self {
        Self {
            id: id.into(),
            release_time,
            input_bytes: input,
            shuffle_bytes: shuffle,
            output_bytes: output,
            deadline_slots: None,
            length_slots: None,
        }
    }

    /// Index of the slot containing the release time.
    pub fn release_slot(&self, slot_seconds: f64) -> usize {
        (self.release_time / slot_seconds).floor() as usize
    }

    pub fn bytes(&self) -> [f64; 3] {
        [self.input_bytes, self.shuffle_bytes, self.output_bytes]
    }

    pub fn mb(&self) -> [f64; 3] {
        self.bytes().map(|b| b / BYTES_PER_MB)
    }
}

/// Released load per slot, normalized to server units.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadCurve<T> {
    pub slot_seconds: f64,
    pub server_capacity: f64,
    pub values: Vec<T>,
}

impl<T: Scalar> WorkloadCurve<T> {
    pub fn new(values: Vec<T>, slot_seconds: f64) -> Self {
        Self {
            slot_seconds,
            server_capacity: 1.0,
            values,
        }
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn peak(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// Copy extended with `extra` zero slots.
    pub fn padded(&self, extra: usize) -> Self {
        let mut values = self.values.clone();
        values.resize(values.len() + extra, T::zero());
        Self { values, ..*self }
    }

    pub fn check_fleet(&self, fleet: T) -> Result<()> {
        match self
            .values
            .iter()
            .position(|&v| v > fleet + T::check_tolerance())
        {
            Some(t) => Err(Error::invalid(format!(
                "released load {} at slot {} exceeds fleet size {}",
                self.values[t], t, fleet
            ))),
            None => Ok(()),
        }
    }
}

/// Released load split by relative deadline: `loads[d][t]` is released in
/// slot `t` and must finish by slot `t + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadlineDecomposedLoad<T> {
    pub loads: Vec<Vec<T>>,
}

impl<T: Scalar> DeadlineDecomposedLoad<T> {
    pub fn zeros(max_deadline: usize, horizon: usize) -> Self {
        Self {
            loads: vec![vec![T::zero(); horizon]; max_deadline + 1],
        }
    }

    /// All load of `curve` carries the same deadline.
    pub fn uniform(curve: &[T], deadline: usize) -> Self {
        let mut out = Self::zeros(deadline, curve.len());
        out.loads[deadline].copy_from_slice(curve);
        out
    }

    pub fn max_deadline(&self) -> usize {
        self.loads.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> usize {
        self.loads.first().map_or(0, Vec::len)
    }

    pub fn add(&mut self, deadline: usize, slot: usize, amount: T) {
        if deadline >= self.loads.len() {
            let h = self.horizon();
            self.loads.resize(deadline + 1, vec![T::zero(); h]);
        }
        if slot >= self.horizon() {
            for row in &mut self.loads {
                row.resize(slot + 1, T::zero());
            }
        }
        self.loads[deadline][slot] = self.loads[deadline][slot] + amount;
    }

    /// The vector `(L_{0,t}, …, L_{ν,t})`; zeros past the horizon.
    pub fn release_vector(&self, slot: usize) -> Vec<T> {
        self.loads
            .iter()
            .map(|row| row.get(slot).copied().unwrap_or_else(T::zero))
            .collect()
    }

    pub fn totals(&self) -> Vec<T> {
        (0..self.horizon())
            .map(|t| self.loads.iter().map(|row| row[t]).sum())
            .collect()
    }

    pub fn padded(&self, extra: usize) -> Self {
        Self {
            loads: self
                .loads
                .iter()
                .map(|row| {
                    let mut r = row.clone();
                    r.resize(r.len() + extra, T::zero());
                    r
                })
                .collect(),
        }
    }
}

/// Curve shifted right by `delay` slots, truncated to the same horizon.
pub fn delayed_curve<T: Scalar>(values: &[T], delay: usize) -> Vec<T> {
    (0..values.len())
        .map(|t| if t < delay { T::zero() } else { values[t - delay] })
        .collect()
}

/// `l′_t = Σ_d L_{d, t−d}` over the horizon of `decomp`.
pub fn generalized_deadline_curve<T: Scalar>(decomp: &DeadlineDecomposedLoad<T>) -> Vec<T> {
    let h = decomp.horizon();
    let mut out = vec![T::zero(); h];
    for (d, row) in decomp.loads.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            if t + d < h {
                out[t + d] = out[t + d] + v;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRecord {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub jobs: Vec<Job>,
    pub rejected: Vec<RejectedRecord>,
}

pub const TRACE_HEADER: [&str; 5] = [
    "job_id",
    "release_time_s",
    "input_bytes",
    "shuffle_bytes",
    "output_bytes",
];

/// Reads a comma-separated trace with header
/// `job_id,release_time_s,input_bytes,shuffle_bytes,output_bytes`.
///
/// Bad rows are skipped and listed in the report; the jobs come back sorted
/// by release time.
pub fn ingest_trace<R: Read>(source: R) -> Result<IngestReport> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source);
    let mut report = IngestReport::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                report.rejected.push(RejectedRecord {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        match parse_job(&record) {
            Ok(job) => report.jobs.push(job),
            Err(reason) => report.rejected.push(RejectedRecord { line, reason }),
        }
    }
    report
        .jobs
        .sort_by(|a, b| a.release_time.total_cmp(&b.release_time));
    Ok(report)
}

fn parse_job(record: &csv::StringRecord) -> std::result::Result<Job, String> {
    if record.len() != TRACE_HEADER.len() {
        return Err(format!(
            "expected {} fields, found {}",
            TRACE_HEADER.len(),
            record.len()
        ));
    }
    let id = record[0].to_string();
    if id.is_empty() {
        return Err("empty job_id".into());
    }
    let mut nums = [0.0; 4];
    for (k, slot) in nums.iter_mut().enumerate() {
        let field = &record[k + 1];
        let v: f64 = field
            .parse()
            .map_err(|_| format!("{}: not a number: {field:?}", TRACE_HEADER[k + 1]))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("{}: negative or non-finite value {v}", TRACE_HEADER[k + 1]));
        }
        *slot = v;
    }
    Ok(Job::new(id, nums[0], nums[1], nums[2], nums[3]))
}

pub fn write_trace<W: Write>(jobs: &[Job], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for j in jobs {
        w.write_record([
            j.id.clone(),
            j.release_time.to_string(),
            j.input_bytes.to_string(),
            j.shuffle_bytes.to_string(),
            j.output_bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregates jobs into the released-load curve and its per-deadline split.
///
/// A job of `ℓ` slots adds `1/server_capacity` to each of the `ℓ` slots
/// starting at its release slot, all with the job's deadline. The horizon is
/// `horizon` slots, extended if a job spills past it.
pub fn build_curves<T: Scalar>(
    jobs: &[Job],
    slot_seconds: f64,
    server_capacity: f64,
    horizon: usize,
) -> Result<(WorkloadCurve<T>, DeadlineDecomposedLoad<T>)> {
    if !(server_capacity > 0.0) {
        return Err(Error::invalid(format!(
            "server capacity must be positive, got {server_capacity}"
        )));
    }
    if !(slot_seconds > 0.0) {
        return Err(Error::invalid("slot length must be positive"));
    }
    let unit = T::lit(1.0 / server_capacity);
    let mut decomp = DeadlineDecomposedLoad::zeros(0, horizon);
    for job in jobs {
        let (Some(length), Some(deadline)) = (job.length_slots, job.deadline_slots) else {
            return Err(Error::invalid(format!(
                "job {} has no length or deadline assigned",
                job.id
            )));
        };
        let release = job.release_slot(slot_seconds);
        if release >= horizon {
            return Err(Error::invalid(format!(
                "job {} releases in slot {} past the horizon of {} slots",
                job.id, release, horizon
            )));
        }
        for k in 0..length.max(1) {
            decomp.add(deadline, release + k, unit);
        }
    }
    let curve = WorkloadCurve {
        slot_seconds,
        server_capacity,
        values: decomp.totals(),
    };
    Ok((curve, decomp))
}

/// Two-column `slot,value` CSV; slots are written 1-based.
pub fn write_curve_csv<T: Scalar, W: Write>(values: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "value"])?;
    for (t, v) in values.iter().enumerate() {
        w.write_record([(t + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
