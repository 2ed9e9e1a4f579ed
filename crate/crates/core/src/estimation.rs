//! MapReduce job execution-time model.
//!
//! A job reads `S` MB, shuffles `S′` MB and writes `S″` MB. It is split into
//! `X = ⌈S/block⌉` mappers and `Y = ⌈S″/block⌉` reducers (both at least 1).
//! Per-task times:
//!
//! ```text
//! T_m = S/(X·V_i) + α1·S/X + S′/(X·V_o)
//! T_s = S′/(X·Y·V_n)
//! T_r = α2·S′/Y + S″/(Y·V_o)
//! ```
//!
//! and the job time depends on whether reducers wait for the shuffle:
//! `T_m + λ_r(X·T_s + T_r)` when `T_m < Mm·T_s`, otherwise
//! `λ_m·T_m + Mm·T_s + λ_r(X·T_s + T_r)`, with `λ_m = ⌈X/Mm⌉`, `λ_r = ⌈Y/R⌉`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::workload::Job;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationParams<T> {
    /// Data read rate, MB/s.
    pub read_rate: T,
    /// Data output rate, MB/s.
    pub write_rate: T,
    /// Network transfer rate, MB/s.
    pub network_rate: T,
    /// Mapper compute slope, s/MB.
    pub map_slope: T,
    /// Reducer compute slope, s/MB.
    pub reduce_slope: T,
    pub block_mb: T,
    pub max_map_slots: u64,
    pub max_reduce_slots: u64,
}

impl<T: Scalar> Default for EstimationParams<T> {
    fn default() -> Self {
        Self {
            read_rate: T::lit(100.0),
            write_rate: T::lit(100.0),
            network_rate: T::lit(10.0),
            map_slope: T::lit(0.8),
            reduce_slope: T::lit(0.9),
            block_mb: T::lit(128.0),
            max_map_slots: 10_000,
            max_reduce_slots: 10_000,
        }
    }
}

impl<T: Scalar> EstimationParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("read_rate", self.read_rate),
            ("write_rate", self.write_rate),
            ("network_rate", self.network_rate),
            ("map_slope", self.map_slope),
            ("reduce_slope", self.reduce_slope),
            ("block_mb", self.block_mb),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_map_slots == 0 || self.max_reduce_slots == 0 {
            return Err(Error::invalid("task slot counts must be positive"));
        }
        Ok(())
    }
}

/// Stage times of one job, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageTimes<T> {
    pub mappers: u64,
    pub reducers: u64,
    pub map: T,
    pub shuffle: T,
    pub reduce: T,
    pub total: T,
    pub reducers_wait: bool,
}

fn task_count<T: Scalar>(mb: T, block: T) -> u64 {
    (mb / block).ceil().to_u64().unwrap_or(1).max(1)
}

/// Stage and total times for sizes given in MB.
pub fn stage_times<T: Scalar>(
    input_mb: T,
    shuffle_mb: T,
    output_mb: T,
    p: &EstimationParams<T>,
) -> Result<StageTimes<T>> {
    p.validate()?;
    if input_mb < T::zero() || shuffle_mb < T::zero() || output_mb < T::zero() {
        return Err(Error::invalid("job sizes must be nonnegative"));
    }
    let mappers = task_count(input_mb, p.block_mb);
    let reducers = task_count(output_mb, p.block_mb);
    let x = T::from_u64(mappers).expect("count fits");
    let y = T::from_u64(reducers).expect("count fits");
    let map_slots = T::from_u64(p.max_map_slots).expect("count fits");

    let map = input_mb / (x * p.read_rate) + p.map_slope * input_mb / x + shuffle_mb / (x * p.write_rate);
    let shuffle = shuffle_mb / (x * y * p.network_rate);
    let reduce = p.reduce_slope * shuffle_mb / y + output_mb / (y * p.write_rate);

    let map_rounds = T::from_u64(mappers.div_ceil(p.max_map_slots)).expect("count fits");
    let reduce_rounds = T::from_u64(reducers.div_ceil(p.max_reduce_slots)).expect("count fits");
    let tail = reduce_rounds * (x * shuffle + reduce);
    let reducers_wait = !(map < map_slots * shuffle);
    let total = if reducers_wait {
        map_rounds * map + map_slots * shuffle + tail
    } else {
        map + tail
    };
    Ok(StageTimes {
        mappers,
        reducers,
        map,
        shuffle,
        reduce,
        total,
        reducers_wait,
    })
}

/// Estimated execution time of `job` in seconds.
pub fn estimate_job_time(job: &Job, p: &EstimationParams<f64>) -> Result<f64> {
    let [s, s1, s2] = job.mb();
    Ok(stage_times(s, s1, s2, p)?.total)
}

/// `⌈seconds/τ⌉`, at least one slot.
pub fn length_in_slots(seconds: f64, slot_seconds: f64) -> usize {
    assert!(slot_seconds > 0.0, "slot length must be positive");
    ((seconds.max(0.0) / slot_seconds).ceil() as usize).max(1)
}
