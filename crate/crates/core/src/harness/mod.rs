//! Experiment driver: workload preparation, algorithm runs, sweeps and
//! report bundles.

mod config;
mod synth;

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{parse_algorithms, Algorithm, DeadlineMode, ExperimentConfig, LongJobPolicy, KEYS};
pub use synth::{synth_workload, SynthKind, SynthSpec};

use crate::cost::{
    check_competitive_bound, cost_report, energy_with_maxima, read_metrics_csv, switching_bound_holds,
    synthetic_metrics, write_energy_table, BoundCheck, CostReport, CounterMaxima, EnergyReport, MetricRecord,
    MetricScale, PowerParams,
};
use crate::error::{Error, Result};
use crate::estimation::{length_in_slots, stage_times};
use crate::gcp::{run_gcp, run_gcp_with_heads, GcpStep};
use crate::offline::{solve_offline_decomposed, CapacitySchedule, CostParams, Provenance};
use crate::prep::{
    classify_kmeans, cluster_report, decompose_nonpreemptive, decompose_preemptive, write_cluster_csv, ClusterModel,
    ClusterRow, NonPreemptiveHead,
};
use crate::vfw::{run_vfw, VfwConfig, VfwStep};
use crate::workload::{
    build_curves, delayed_curve, generalized_deadline_curve, ingest_trace, write_curve_csv, DeadlineDecomposedLoad,
    Job, RejectedRecord, WorkloadCurve,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Estimate,
    Classify,
    Decompose,
    Schedule(Algorithm),
    Check(Algorithm),
    Cost,
    Energy,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Config => f.write_str("config"),
            Stage::Ingest => f.write_str("ingest"),
            Stage::Estimate => f.write_str("estimate"),
            Stage::Classify => f.write_str("classify"),
            Stage::Decompose => f.write_str("decompose"),
            Stage::Schedule(a) => write!(f, "schedule:{a}"),
            Stage::Check(a) => write!(f, "check:{a}"),
            Stage::Cost => f.write_str("cost"),
            Stage::Energy => f.write_str("energy"),
            Stage::Output => f.write_str("output"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

/// Jobs read from a trace with lengths estimated.
#[derive(Debug, Clone)]
pub struct JobSet {
    pub jobs: Vec<Job>,
    pub rejected: Vec<RejectedRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub id: String,
    pub input_mb: f64,
    pub shuffle_mb: f64,
    pub output_mb: f64,
    pub mappers: u64,
    pub reducers: u64,
    pub reducers_wait: bool,
    pub seconds: f64,
    pub slots: usize,
}

/// Reads the trace and estimates each job's length.
pub fn load_jobs(config: &ExperimentConfig) -> StageResult<(JobSet, Vec<EstimateRow>)> {
    let path = config
        .trace
        .as_ref()
        .ok_or_else(|| Error::Config("no trace given".into()))
        .at(Stage::Config)?;
    let file = File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))
        .at(Stage::Ingest)?;
    let report = ingest_trace(file).at(Stage::Ingest)?;
    for r in &report.rejected {
        log::warn!("trace line {} rejected: {}", r.line, r.reason);
    }
    if report.jobs.is_empty() {
        return Err(Error::invalid("trace contains no valid jobs")).at(Stage::Ingest);
    }
    let mut jobs = report.jobs;
    let mut rows = Vec::with_capacity(jobs.len());
    for job in jobs.iter_mut() {
        let [s, s1, s2] = job.mb();
        let t = stage_times(s, s1, s2, &config.estimation).at(Stage::Estimate)?;
        let slots = length_in_slots(t.total, config.slot_seconds);
        job.length_slots = Some(slots);
        rows.push(EstimateRow {
            id: job.id.clone(),
            input_mb: s,
            shuffle_mb: s1,
            output_mb: s2,
            mappers: t.mappers,
            reducers: t.reducers,
            reducers_wait: t.reducers_wait,
            seconds: t.total,
            slots,
        });
    }
    Ok((
        JobSet {
            jobs,
            rejected: report.rejected,
        },
        rows,
    ))
}

/// Per-deadline load ready for the algorithms.
#[derive(Debug, Clone)]
pub struct PreparedLoad {
    pub curve: WorkloadCurve<f64>,
    pub decomp: DeadlineDecomposedLoad<f64>,
    /// Non-preemptive jobs handed to GCP instead of `decomp`.
    pub heads: Vec<NonPreemptiveHead>,
    pub clusters: Option<(ClusterModel, Vec<ClusterRow>)>,
    pub fleet: f64,
}

impl PreparedLoad {
    /// The single deadline carried by all load, if there is one.
    pub fn uniform_deadline(&self) -> Option<usize> {
        let rows: Vec<usize> = self
            .decomp
            .loads
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&v| v > 0.0))
            .map(|(d, _)| d)
            .collect();
        match rows.as_slice() {
            [] => Some(self.decomp.max_deadline()),
            [d] => Some(*d),
            _ => None,
        }
    }
}

fn fleet_for(config: &ExperimentConfig, curve: &[f64]) -> f64 {
    config.fleet.unwrap_or_else(|| {
        let peak = curve.iter().cloned().fold(0.0, f64::max);
        (peak - 1e-9).ceil().max(1.0)
    })
}

/// Builds the load for deadline `deadline` (uniform mode) or the class
/// deadlines (classes mode).
pub fn prepare_load(config: &ExperimentConfig, jobs: Option<&JobSet>, deadline: usize) -> StageResult<PreparedLoad> {
    let tau = config.slot_seconds;
    let Some(set) = jobs else {
        let spec = config
            .synthetic
            .as_ref()
            .ok_or_else(|| Error::Config("no workload source".into()))
            .at(Stage::Config)?;
        let mut curve = synth_workload(spec, config.seed, config.fleet).at(Stage::Ingest)?;
        curve.slot_seconds = tau;
        let decomp = DeadlineDecomposedLoad::uniform(&curve.values, deadline);
        let fleet = fleet_for(config, &curve.values);
        return Ok(PreparedLoad {
            curve,
            decomp,
            heads: Vec::new(),
            clusters: None,
            fleet,
        });
    };

    let mut jobs = set.jobs.clone();
    let mut clusters = None;
    match config.deadline_mode {
        DeadlineMode::Uniform => {
            let mut raised = 0;
            for job in jobs.iter_mut() {
                let len = job.length_slots.unwrap_or(1);
                let d = match config.long_jobs {
                    LongJobPolicy::Spread => deadline,
                    _ => deadline.max(len),
                };
                raised += usize::from(d > deadline);
                job.deadline_slots = Some(d);
            }
            if raised > 0 {
                log::warn!("{raised} jobs longer than D = {deadline} had their deadline raised to their length");
            }
        }
        DeadlineMode::Classes => {
            let model = classify_kmeans(&jobs, config.k, &config.pool(), config.seed, config.deadline_ordering)
                .at(Stage::Classify)?;
            model.assign_deadlines(&mut jobs);
            let rows = cluster_report(&jobs, &model);
            clusters = Some((model, rows));
        }
    }

    let last_release = jobs.iter().map(|j| j.release_slot(tau)).max().unwrap_or(0);
    let horizon = config.horizon.unwrap_or(last_release + 1);
    let unit = 1.0 / config.server_capacity;
    let mut heads = Vec::new();
    let (curve, decomp) = match config.long_jobs {
        LongJobPolicy::Spread => build_curves::<f64>(&jobs, tau, config.server_capacity, horizon).at(Stage::Decompose)?,
        policy => {
            let mut decomp = DeadlineDecomposedLoad::zeros(0, horizon);
            for job in &jobs {
                let release = job.release_slot(tau);
                if release >= horizon {
                    return Err(Error::invalid(format!(
                        "job {} releases in slot {release} past the horizon of {horizon} slots",
                        job.id
                    )))
                    .at(Stage::Decompose);
                }
                let len = job.length_slots.unwrap_or(1);
                let d = job.deadline_slots.unwrap_or(deadline);
                for piece in decompose_preemptive(&job.id, release, d, len, unit).at(Stage::Decompose)? {
                    decomp.add(piece.deadline_slots, piece.release_slot, piece.load);
                }
                if policy == LongJobPolicy::Nonpreemptive {
                    heads.push(decompose_nonpreemptive(&job.id, release, d, len, unit).at(Stage::Decompose)?);
                }
            }
            let curve = WorkloadCurve {
                slot_seconds: tau,
                server_capacity: config.server_capacity,
                values: decomp.totals(),
            };
            (curve, decomp)
        }
    };
    // A non-preemptive job may run anywhere in its window, so size the fleet
    // for every window that covers a slot.
    let sizing = if heads.is_empty() {
        curve.values.clone()
    } else {
        let mut cover = vec![0.0; horizon + decomp.max_deadline() + 1];
        for job in &jobs {
            let release = job.release_slot(tau);
            let d = job.deadline_slots.unwrap_or(deadline);
            cover.iter_mut().skip(release).take(d + 1).for_each(|v| *v += unit);
        }
        cover
    };
    let fleet = fleet_for(config, &sizing);
    Ok(PreparedLoad {
        curve,
        decomp,
        heads,
        clusters,
        fleet,
    })
}

/// One algorithm's schedule together with the instance it was checked on.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub delta: Option<usize>,
    pub schedule: CapacitySchedule<f64>,
    /// Released load per slot over the schedule's horizon.
    pub released: Vec<f64>,
    /// Cumulative-deadline increments over the schedule's horizon.
    pub due: Vec<f64>,
    pub vfw_steps: Vec<VfwStep<f64>>,
    pub gcp_steps: Vec<GcpStep<f64>>,
}

fn padded_instance(decomp: &DeadlineDecomposedLoad<f64>) -> (Vec<f64>, Vec<f64>) {
    let padded = decomp.padded(decomp.max_deadline());
    (padded.totals(), generalized_deadline_curve(&padded))
}

/// Runs one algorithm and checks its schedule. Returns `None` when the
/// algorithm does not apply to this load.
pub fn run_algorithm(
    algorithm: Algorithm,
    load: &PreparedLoad,
    delta: usize,
    window_deadlines: bool,
    params: &CostParams<f64>,
) -> StageResult<Option<AlgorithmRun>> {
    let stage = Stage::Schedule(algorithm);
    let mut run = AlgorithmRun {
        algorithm,
        delta: None,
        schedule: CapacitySchedule {
            m: vec![],
            x: vec![],
            by_deadline: None,
            provenance: Provenance::Follow,
        },
        released: vec![],
        due: vec![],
        vfw_steps: vec![],
        gcp_steps: vec![],
    };
    match algorithm {
        Algorithm::Offline => {
            run.schedule = solve_offline_decomposed(&load.decomp, params).at(stage)?;
            (run.released, run.due) = padded_instance(&load.decomp);
        }
        Algorithm::Vfw => {
            let Some(d) = load.uniform_deadline() else {
                log::warn!("vfw skipped: load carries more than one deadline");
                return Ok(None);
            };
            if delta == 0 || delta >= d {
                log::warn!("vfw skipped: needs 0 < delta < D (delta={delta}, D={d})");
                return Ok(None);
            }
            let cfg = VfwConfig {
                deadline: d,
                delta,
                window_deadlines,
            };
            let out = run_vfw(&load.curve.values, cfg, params).at(stage)?;
            let mut padded = load.curve.values.clone();
            padded.resize(padded.len() + d, 0.0);
            run.due = delayed_curve(&padded, d);
            run.released = padded;
            run.schedule = out.schedule;
            run.vfw_steps = out.steps;
            run.delta = Some(delta);
        }
        Algorithm::Gcp => {
            let out = if load.heads.is_empty() {
                run_gcp(&load.decomp, params)
            } else {
                let empty = DeadlineDecomposedLoad::zeros(0, load.decomp.horizon());
                run_gcp_with_heads(&empty, &load.heads, params)
            }
            .at(stage)?;
            run.released = out.released.totals();
            run.due = generalized_deadline_curve(&out.released);
            run.schedule = out.schedule;
            run.gcp_steps = out.steps;
        }
        Algorithm::Follow | Algorithm::NoProvisioning => {
            (run.released, run.due) = padded_instance(&load.decomp);
            let m = if algorithm == Algorithm::Follow {
                run.released.clone()
            } else {
                if let Some(t) = run.released.iter().position(|&l| l > params.fleet + 1e-9) {
                    return Err(Error::invalid(format!(
                        "load {} at slot {t} exceeds the fleet of {}",
                        run.released[t], params.fleet
                    )))
                    .at(stage);
                }
                vec![params.fleet; run.released.len()]
            };
            run.schedule = CapacitySchedule {
                m,
                x: run.released.clone(),
                by_deadline: None,
                provenance: if algorithm == Algorithm::Follow {
                    Provenance::Follow
                } else {
                    Provenance::NoProvisioning
                },
            };
        }
    }
    run.schedule
        .check(&run.released, &run.due, params.fleet, 1e-6)
        .at(Stage::Check(algorithm))?;
    Ok(Some(run))
}

/// Follow-the-workload on the same released load and horizon as `run`.
pub fn follow_baseline(run: &AlgorithmRun) -> CapacitySchedule<f64> {
    CapacitySchedule {
        m: run.released.clone(),
        x: run.released.clone(),
        by_deadline: None,
        provenance: Provenance::Follow,
    }
}

pub fn run_follow_baseline(load: &[f64]) -> CapacitySchedule<f64> {
    CapacitySchedule {
        m: load.to_vec(),
        x: load.to_vec(),
        by_deadline: None,
        provenance: Provenance::Follow,
    }
}

pub fn run_no_provisioning(load: &[f64], fleet: f64) -> Result<CapacitySchedule<f64>> {
    if let Some(t) = load.iter().position(|&l| l > fleet) {
        return Err(Error::invalid(format!("load {} at slot {t} exceeds the fleet of {fleet}", load[t])));
    }
    Ok(CapacitySchedule {
        m: vec![fleet; load.len()],
        x: load.to_vec(),
        by_deadline: None,
        provenance: Provenance::NoProvisioning,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergySummary {
    pub energy_wh: f64,
    pub machine_slots: usize,
    pub mean_cpu_util: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub delta: Option<usize>,
    pub horizon: usize,
    pub cost: CostReport<f64>,
    pub bound: BoundCheck<f64>,
    pub switching_bound_holds: bool,
    pub energy: Option<EnergySummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub fleet: f64,
    pub jobs: usize,
    pub rejected_records: usize,
    pub released_slots: usize,
    pub load_total: f64,
    pub peak_load: f64,
    pub runs: Vec<RunReport>,
    pub energy_maxima: Option<CounterMaxima>,
}

fn summarize(run: &AlgorithmRun, params: &CostParams<f64>) -> StageResult<RunReport> {
    let baseline = follow_baseline(run);
    let cost = cost_report(&run.schedule, &run.released, params, &baseline).at(Stage::Cost)?;
    Ok(RunReport {
        algorithm: run.algorithm,
        delta: run.delta,
        horizon: run.schedule.horizon(),
        bound: check_competitive_bound(&cost, params),
        switching_bound_holds: switching_bound_holds(&run.schedule, params),
        cost,
        energy: None,
    })
}

fn selected_with_baseline(config: &ExperimentConfig) -> Vec<Algorithm> {
    let mut algs = config.algorithms.clone();
    if !algs.contains(&Algorithm::Follow) {
        algs.push(Algorithm::Follow);
    }
    algs.sort();
    algs
}

fn create(dir: &Path, name: &str) -> StageResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
        .at(Stage::Output)
}

/// Full pipeline for one configuration; writes the bundle into `out_dir`
/// when given.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> StageResult<ExperimentReport> {
    config.validate().at(Stage::Config)?;
    let jobs = match config.trace {
        Some(_) => Some(load_jobs(config)?.0),
        None => None,
    };
    let load = prepare_load(config, jobs.as_ref(), config.deadline)?;
    let params = config.cost_params(load.fleet);
    let delta = config.delta_for(config.deadline);

    let mut runs = Vec::new();
    for alg in selected_with_baseline(config) {
        if let Some(run) = run_algorithm(alg, &load, delta, config.window_deadlines, &params)? {
            runs.push(run);
        }
    }
    let mut reports = runs
        .iter()
        .map(|r| summarize(r, &params))
        .collect::<StageResult<Vec<_>>>()?;

    let metrics: Vec<Vec<MetricRecord>> = runs
        .iter()
        .map(|r| synthetic_metrics(&r.schedule, &MetricScale::default()))
        .collect();
    let maxima = metrics
        .iter()
        .map(|m| CounterMaxima::of(m))
        .fold(CounterMaxima::default(), |a, b| a.merge(&b));
    let mut energy_rows = Vec::new();
    for ((run, records), report) in runs.iter().zip(&metrics).zip(reports.iter_mut()) {
        let e = energy_with_maxima(records, &config.power, config.slot_seconds, &maxima).at(Stage::Energy)?;
        report.energy = Some(EnergySummary {
            energy_wh: e.energy_wh,
            machine_slots: e.machine_slots,
            mean_cpu_util: e.mean_cpu_util,
        });
        energy_rows.push((run.algorithm.name().to_string(), e));
    }

    let report = ExperimentReport {
        config: config.clone(),
        fleet: load.fleet,
        jobs: jobs.as_ref().map_or(0, |j| j.jobs.len()),
        rejected_records: jobs.as_ref().map_or(0, |j| j.rejected.len()),
        released_slots: load.curve.horizon(),
        load_total: load.curve.total(),
        peak_load: load.curve.peak(),
        runs: reports,
        energy_maxima: Some(maxima),
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).at(Stage::Output)?;
        write_curve_csv(&load.curve.values, create(dir, "workload.csv")?).at(Stage::Output)?;
        for run in &runs {
            let name = format!("schedule_{}.csv", run.algorithm.name());
            run.schedule.write_csv(create(dir, &name)?).at(Stage::Output)?;
            if !run.vfw_steps.is_empty() {
                crate::vfw::write_steps_csv(&run.vfw_steps, create(dir, "vfw_steps.csv")?).at(Stage::Output)?;
            }
            if !run.gcp_steps.is_empty() {
                crate::gcp::write_steps_csv(&run.gcp_steps, create(dir, "gcp_steps.csv")?).at(Stage::Output)?;
            }
        }
        if let Some((_, rows)) = &load.clusters {
            write_cluster_csv(rows, create(dir, "clusters.csv")?).at(Stage::Output)?;
        }
        write_energy_table(&energy_rows, Algorithm::Follow.name(), create(dir, "energy_table.csv")?).at(Stage::Output)?;
        serde_json::to_writer_pretty(create(dir, "report.json")?, &report).at(Stage::Output)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub deadline: usize,
    pub delta: Option<usize>,
    pub algorithm: Algorithm,
    pub operating: f64,
    pub switching: f64,
    pub total: f64,
    pub savings: f64,
}

fn sweep_point(
    config: &ExperimentConfig,
    jobs: Option<&JobSet>,
    deadline: usize,
    points: &[(Algorithm, usize)],
) -> StageResult<Vec<SweepRow>> {
    let load = prepare_load(config, jobs, deadline)?;
    let params = config.cost_params(load.fleet);
    let mut rows = Vec::new();
    for &(alg, delta) in points {
        let Some(run) = run_algorithm(alg, &load, delta, config.window_deadlines, &params)? else {
            continue;
        };
        let r = summarize(&run, &params)?;
        rows.push(SweepRow {
            deadline,
            delta: run.delta,
            algorithm: alg,
            operating: r.cost.operating_cost,
            switching: r.cost.switching_cost,
            total: r.cost.total_cost,
            savings: r.cost.savings_vs_baseline,
        });
    }
    Ok(rows)
}

/// One row per algorithm for each `D` in `sweep_min..=sweep_max`, VFW with
/// `δ = ⌊D/2⌋` unless `delta` is set.
pub fn sweep_deadlines(config: &ExperimentConfig) -> StageResult<Vec<SweepRow>> {
    config.validate().at(Stage::Config)?;
    if config.deadline_mode != DeadlineMode::Uniform {
        return Err(Error::Config("deadline sweeps need deadline_mode = uniform".into())).at(Stage::Config);
    }
    let jobs = match config.trace {
        Some(_) => Some(load_jobs(config)?.0),
        None => None,
    };
    let algs = selected_with_baseline(config);
    let per_point = (config.sweep_min..=config.sweep_max)
        .into_par_iter()
        .map(|d| {
            let points: Vec<(Algorithm, usize)> = algs.iter().map(|&a| (a, config.delta_for(d))).collect();
            sweep_point(config, jobs.as_ref(), d, &points)
        })
        .collect::<StageResult<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// VFW for each `δ` in `1..D`, plus one row per other selected algorithm.
pub fn sweep_deltas(config: &ExperimentConfig) -> StageResult<Vec<SweepRow>> {
    config.validate().at(Stage::Config)?;
    let d = config.deadline;
    if d < 2 {
        return Err(Error::Config("delta sweeps need D >= 2".into())).at(Stage::Config);
    }
    let jobs = match config.trace {
        Some(_) => Some(load_jobs(config)?.0),
        None => None,
    };
    let mut points: Vec<(Algorithm, usize)> = (1..d).map(|delta| (Algorithm::Vfw, delta)).collect();
    points.extend(
        selected_with_baseline(config)
            .into_iter()
            .filter(|&a| a != Algorithm::Vfw)
            .map(|a| (a, 0)),
    );
    let per_point = points
        .par_iter()
        .map(|p| sweep_point(config, jobs.as_ref(), d, std::slice::from_ref(p)))
        .collect::<StageResult<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["deadline", "delta", "algorithm", "operating", "switching", "total", "savings"])?;
    for r in rows {
        w.write_record([
            r.deadline.to_string(),
            r.delta.map(|d| d.to_string()).unwrap_or_default(),
            r.algorithm.name().to_string(),
            r.operating.to_string(),
            r.switching.to_string(),
            r.total.to_string(),
            r.savings.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs a sweep and writes `cost_vs_deadline.csv` or `cost_vs_delta.csv`.
pub fn run_sweep(config: &ExperimentConfig, over_delta: bool, out_dir: Option<&Path>) -> StageResult<Vec<SweepRow>> {
    let rows = if over_delta {
        sweep_deltas(config)?
    } else {
        sweep_deadlines(config)?
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).at(Stage::Output)?;
        let name = if over_delta { "cost_vs_delta.csv" } else { "cost_vs_deadline.csv" };
        write_sweep_csv(&rows, create(dir, name)?).at(Stage::Output)?;
    }
    Ok(rows)
}

/// Per-job length estimates; writes `estimates.csv`.
pub fn run_estimate(config: &ExperimentConfig, out_dir: Option<&Path>) -> StageResult<Vec<EstimateRow>> {
    config.estimation.validate().at(Stage::Config)?;
    let (_, rows) = load_jobs(config)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).at(Stage::Output)?;
        let mut w = csv::Writer::from_writer(create(dir, "estimates.csv")?);
        for r in &rows {
            w.serialize(r).at(Stage::Output)?;
        }
        w.flush().at(Stage::Output)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct JobDeadline {
    pub id: String,
    pub cluster: usize,
    pub length_slots: usize,
    pub deadline_slots: usize,
}

/// k-means deadline classes; writes `clusters.csv` and `job_deadlines.csv`.
pub fn run_classify(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> StageResult<(Vec<ClusterRow>, Vec<JobDeadline>)> {
    if config.pool().len() != config.k {
        return Err(Error::Config(format!("deadline pool has {} values but k = {}", config.pool().len(), config.k)))
            .at(Stage::Config);
    }
    let (set, _) = load_jobs(config)?;
    let mut jobs = set.jobs;
    let model = classify_kmeans(&jobs, config.k, &config.pool(), config.seed, config.deadline_ordering)
        .at(Stage::Classify)?;
    model.assign_deadlines(&mut jobs);
    let rows = cluster_report(&jobs, &model);
    let per_job: Vec<JobDeadline> = jobs
        .iter()
        .zip(&model.assignment)
        .map(|(j, &c)| JobDeadline {
            id: j.id.clone(),
            cluster: c,
            length_slots: j.length_slots.unwrap_or(1),
            deadline_slots: j.deadline_slots.unwrap_or(0),
        })
        .collect();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).at(Stage::Output)?;
        write_cluster_csv(&rows, create(dir, "clusters.csv")?).at(Stage::Output)?;
        let mut w = csv::Writer::from_writer(create(dir, "job_deadlines.csv")?);
        for r in &per_job {
            w.serialize(r).at(Stage::Output)?;
        }
        w.flush().at(Stage::Output)?;
    }
    Ok((rows, per_job))
}

/// Energy of a metrics file; writes `energy.json`.
pub fn run_energy(
    metrics: &Path,
    power: &PowerParams,
    slot_seconds: f64,
    out_dir: Option<&Path>,
) -> StageResult<EnergyReport> {
    let file = File::open(metrics)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", metrics.display())))
        .at(Stage::Ingest)?;
    let records = read_metrics_csv(file).at(Stage::Ingest)?;
    let report = crate::cost::energy_from_metrics(&records, power, slot_seconds).at(Stage::Energy)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).at(Stage::Output)?;
        serde_json::to_writer_pretty(create(dir, "energy.json")?, &report).at(Stage::Output)?;
    }
    Ok(report)
}
