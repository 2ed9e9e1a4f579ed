//! Acceptance gate: prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use deferral::cost::{
    check_competitive_bound, cost_report, energy_from_metrics, switching_bound_holds, MetricRecord, PowerParams,
};
use deferral::estimation::{stage_times, EstimationParams};
use deferral::gcp::{gcp_opt_step, run_gcp_uniform, update_unassigned};
use deferral::harness::{run_sweep, Algorithm, ExperimentConfig};
use deferral::offline::{disaggregate_edf, solve_offline_uniform, CapacitySchedule, CostParams, Provenance};
use deferral::vfw::{run_vfw, VfwConfig, VfwRunner};
use deferral::workload::{delayed_curve, DeadlineDecomposedLoad};
use rand::Rng;
use rayon::prelude::*;

use common::{fleet_for, grid_offline, padded, random_workload, rng};

struct Outcome {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { id, passed, detail }
}

fn follow(load: &[f64]) -> CapacitySchedule<f64> {
    CapacitySchedule {
        m: load.to_vec(),
        x: load.to_vec(),
        by_deadline: None,
        provenance: Provenance::Follow,
    }
}

#[derive(Default)]
struct SuiteTally {
    schedules: usize,
    check_failures: Vec<String>,
    errors: Vec<String>,
    bound_failures: Vec<String>,
    max_ratio: f64,
    switching_failures: Vec<String>,
    ordering_failures: Vec<String>,
    ordering_pairs: usize,
}

impl SuiteTally {
    fn merge(mut self, o: SuiteTally) -> SuiteTally {
        self.schedules += o.schedules;
        self.check_failures.extend(o.check_failures);
        self.errors.extend(o.errors);
        self.bound_failures.extend(o.bound_failures);
        self.max_ratio = self.max_ratio.max(o.max_ratio);
        self.switching_failures.extend(o.switching_failures);
        self.ordering_failures.extend(o.ordering_failures);
        self.ordering_pairs += o.ordering_pairs;
        self
    }
}

fn first(v: &[String]) -> String {
    v.first().cloned().unwrap_or_default()
}

/// One workload through every D in 2..=12 and every δ.
fn suite_instance(seed: u64) -> SuiteTally {
    let load = random_workload(seed, 288);
    let fleet = fleet_for(&load);
    let p = CostParams::new(1.0, 0.0, 12.0, fleet);
    let mut tally = SuiteTally::default();
    for d in 2..=12 {
        let released = padded(&load, d);
        let due = delayed_curve(&released, d);
        let base = follow(&released);
        let offline = match solve_offline_uniform(&load, d, &p) {
            Ok(s) => Some(s),
            Err(e) => {
                tally.errors.push(format!("seed {seed} D={d} offline: {e}"));
                None
            }
        };
        let offline_cost = offline.as_ref().map(|s| {
            if !switching_bound_holds(s, &p) {
                tally.switching_failures.push(format!("seed {seed} D={d} offline"));
            }
            cost_report(s, &released, &p, &base).unwrap().total_cost
        });

        let mut online: Vec<(String, Result<CapacitySchedule<f64>, deferral::Error>)> = Vec::new();
        online.push((
            format!("gcp-u D={d}"),
            run_gcp_uniform(&load, d, &p).map(|o| o.schedule),
        ));
        for delta in 1..d {
            online.push((
                format!("vfw D={d} delta={delta}"),
                run_vfw(&load, VfwConfig::new(d, delta), &p).map(|o| o.schedule),
            ));
        }
        for (name, result) in online {
            let s = match result {
                Ok(s) => s,
                Err(e) => {
                    tally.errors.push(format!("seed {seed} {name}: {e}"));
                    continue;
                }
            };
            tally.schedules += 1;
            if let Err(e) = s.check(&released, &due, fleet, 1e-6) {
                tally.check_failures.push(format!("seed {seed} {name}: {e}"));
            }
            let report = cost_report(&s, &released, &p, &base).unwrap();
            let bound = check_competitive_bound(&report, &p);
            tally.max_ratio = tally.max_ratio.max(report.bound_ratio);
            if !bound.passed || report.bound_ratio > 25.0 {
                tally
                    .bound_failures
                    .push(format!("seed {seed} {name}: ratio {}", report.bound_ratio));
            }
            if !switching_bound_holds(&s, &p) {
                tally.switching_failures.push(format!("seed {seed} {name}"));
            }
            if let Some(opt) = offline_cost {
                tally.ordering_pairs += 1;
                if opt > report.total_cost + 1e-6 {
                    tally
                        .ordering_failures
                        .push(format!("seed {seed} {name}: offline {opt} > {}", report.total_cost));
                }
            }
        }
    }
    tally
}

fn feasibility_suite() -> Vec<Outcome> {
    let tally = (0..200u64)
        .into_par_iter()
        .map(|i| suite_instance(1000 + i))
        .reduce(SuiteTally::default, SuiteTally::merge);
    let a1 = tally.check_failures.is_empty() && tally.errors.is_empty();
    vec![
        outcome(
            "A1",
            a1,
            format!(
                "feasibility: {} VFW/GCP-U schedules over 200 workloads, {} C1/C2 violations, {} errors {}{}",
                tally.schedules,
                tally.check_failures.len(),
                tally.errors.len(),
                first(&tally.check_failures),
                first(&tally.errors)
            ),
        ),
        outcome(
            "A2",
            tally.bound_failures.is_empty() && tally.schedules > 0,
            format!(
                "competitive bound: max ratio {:.4} (limit 25), {} failures {}",
                tally.max_ratio,
                tally.bound_failures.len(),
                first(&tally.bound_failures)
            ),
        ),
        outcome(
            "A4",
            tally.switching_failures.is_empty(),
            format!(
                "switching <= 2*beta*sum(m): {} failures {}",
                tally.switching_failures.len(),
                first(&tally.switching_failures)
            ),
        ),
        outcome(
            "A6",
            tally.ordering_failures.is_empty() && tally.ordering_pairs > 0,
            format!(
                "offline <= online on {} shared instances, {} failures {}",
                tally.ordering_pairs,
                tally.ordering_failures.len(),
                first(&tally.ordering_failures)
            ),
        ),
    ]
}

fn offline_oracle() -> Outcome {
    const UNITS: i64 = 20;
    let step = 1.0 / UNITS as f64;
    let mut r = rng(33);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..50 {
        let t = r.gen_range(1..=6);
        let d = r.gen_range(0..=2);
        let fleet = r.gen_range(1..=5i64);
        let (e0, e1, beta) = (r.gen_range(0.5..2.0), r.gen_range(0.0..1.0), r.gen_range(0.0..12.0));
        let units: Vec<i64> = (0..t)
            .map(|_| if r.gen_bool(0.3) { 0 } else { r.gen_range(0..=fleet * UNITS) })
            .collect();
        let load: Vec<f64> = units.iter().map(|&u| u as f64 * step).collect();
        let p = CostParams::new(e0, e1, beta, fleet as f64);
        let s = solve_offline_uniform(&load, d, &p).expect("load <= fleet is feasible");
        let (o, sw) = deferral::cost::schedule_costs(&s, &p);
        let lp = o + sw;
        let mut grid_load = units.clone();
        grid_load.resize(t + d, 0);
        let grid_due: Vec<i64> = (0..t + d).map(|k| if k >= d { grid_load[k - d] } else { 0 }).collect();
        let grid = grid_offline(&grid_load, &grid_due, fleet * UNITS, e0, e1, beta, step).expect("grid feasible");
        let resolution = step * (t + d) as f64 * (e0 + e1 + 2.0 * beta);
        worst = worst.max(grid - lp);
        if lp > grid + 1e-6 || grid - lp > resolution + 1e-6 {
            failures.push(format!("instance {i}: lp {lp} grid {grid} resolution {resolution}"));
        }
    }
    outcome(
        "A3",
        failures.is_empty(),
        format!(
            "offline LP vs 0.05-grid search on 50 instances, max grid-lp gap {worst:.6}, {} failures {}",
            failures.len(),
            first(&failures)
        ),
    )
}

fn edf_equivalence() -> Outcome {
    const Q: f64 = 1.0 / 64.0;
    let mut r = rng(55);
    let (mut accepted, mut attempts) = (0, 0);
    let mut failures = Vec::new();
    while accepted < 100 && attempts < 10_000 {
        attempts += 1;
        let horizon = r.gen_range(3..=10);
        let nu = r.gen_range(1..=4);
        let mut decomp = DeadlineDecomposedLoad::zeros(nu, horizon);
        let mut chosen: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        let mut x = vec![0.0; horizon + nu];
        for t in 0..horizon {
            for d in 0..=nu {
                if !r.gen_bool(0.4) {
                    continue;
                }
                let quanta = r.gen_range(1..=16);
                decomp.loads[d][t] = quanta as f64 * Q;
                for _ in 0..quanta {
                    let slot = t + r.gen_range(0..=d);
                    x[slot] += Q;
                    *chosen.entry((t, d, slot)).or_default() += Q;
                }
            }
        }
        let edf = match disaggregate_edf(&x, &decomp) {
            Ok(a) => a,
            Err(e) => {
                failures.push(format!("attempt {attempts}: {e}"));
                accepted += 1;
                continue;
            }
        };
        let mut by_key: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for a in &edf {
            *by_key.entry((a.release, a.deadline, a.slot)).or_default() += a.amount;
        }
        if by_key == chosen {
            continue;
        }
        accepted += 1;
        let mut per_slot = vec![0.0; x.len()];
        for a in &edf {
            per_slot[a.slot] += a.amount;
            if a.slot > a.release + a.deadline || a.slot < a.release {
                failures.push(format!("attempt {attempts}: slot {} outside window", a.slot));
            }
        }
        if per_slot != x {
            failures.push(format!("attempt {attempts}: per-slot totals changed"));
        }
    }
    outcome(
        "A5",
        failures.is_empty() && accepted == 100,
        format!(
            "EDF re-assignment of {accepted} non-EDF feasible assignments, {} failures {}",
            failures.len(),
            first(&failures)
        ),
    )
}

fn savings_trend() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::parse(
        "synthetic = sinusoid:mean=10,pmr=3,period=288,horizon=288,noise=0.2\n\
         algorithm = offline,vfw,gcp\nslot_seconds = 300\ne0 = 1\ne1 = 0\nbeta = 12\nseed = 7\n",
    )
    .unwrap();
    config.sweep_min = 1;
    config.sweep_max = 12;
    let rows = match run_sweep(&config, false, Some(dir.path())) {
        Ok(r) => r,
        Err(e) => return outcome("A7", false, format!("sweep failed: {e}")),
    };
    let savings = |alg: Algorithm| -> Vec<(usize, f64)> {
        rows.iter()
            .filter(|r| r.algorithm == alg)
            .map(|r| (r.deadline, r.savings))
            .collect()
    };
    let offline = savings(Algorithm::Offline);
    let gcp = savings(Algorithm::Gcp);
    let vfw = savings(Algorithm::Vfw);
    let monotone = offline.len() == 12 && offline.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9);
    let gcp2 = gcp.iter().find(|r| r.0 == 2).map(|r| r.1).unwrap_or(f64::NAN);
    let off2 = offline.iter().find(|r| r.0 == 2).map(|r| r.1).unwrap_or(f64::NAN);
    let gcp_ok = gcp2 > 0.0 && gcp2 <= off2 + 1e-9;
    let csv = std::fs::read_to_string(dir.path().join("cost_vs_deadline.csv")).unwrap_or_default();
    let emitted = csv.starts_with("deadline,delta,algorithm,operating,switching,total,savings")
        && ["offline", "vfw", "gcp"].iter().all(|a| csv.contains(&format!(",{a},")))
        && vfw.len() == 11;
    outcome(
        "A7",
        monotone && gcp_ok && emitted,
        format!(
            "diurnal PMR 3: offline savings D=1..12 {:.2}%..{:.2}% nondecreasing={monotone}; GCP-U D=2 {:.3}% vs offline {:.3}%; sweep CSV rows={}",
            100.0 * offline.first().map_or(0.0, |r| r.1),
            100.0 * offline.last().map_or(0.0, |r| r.1),
            100.0 * gcp2,
            100.0 * off2,
            rows.len()
        ),
    )
}

fn estimation_examples() -> Outcome {
    let p = EstimationParams::<f64>::default();
    let a = stage_times(128.0, 0.0, 128.0, &p).unwrap().total;
    let b = stage_times(0.015, 0.0, 0.685, &p).unwrap().total;
    let wide = EstimationParams {
        max_map_slots: 100,
        ..p
    };
    let c = stage_times(128.0, 1280.0, 128.0, &wide).unwrap().total;
    let ok = (a - 104.96).abs() < 1e-9 && (b - 0.019).abs() < 1e-9 && (c - 1397.76).abs() < 1e-9;
    outcome("A8", ok, format!("estimates {a} s, {b} s, {c} s"))
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn step_latency() -> Outcome {
    let load = random_workload(4242, 288);
    let fleet = fleet_for(&load);
    let p = CostParams::new(1.0, 0.0, 12.0, fleet);
    let mut worst = Duration::ZERO;
    let mut lines = Vec::new();
    for d in [2, 6, 12] {
        let mut runner = VfwRunner::new(&load, VfwConfig::new(d, d / 2), p).unwrap();
        let mut times = Vec::new();
        while !runner.is_done() {
            let start = Instant::now();
            runner.step().unwrap();
            times.push(start.elapsed());
        }
        let vfw = median(times);

        let decomp = DeadlineDecomposedLoad::uniform(&load, d);
        let mut y = vec![0.0; d + 1];
        let mut m_prev = 0.0;
        let mut times = Vec::new();
        for t in 0..load.len() + d {
            y = update_unassigned(&y, m_prev, &decomp.release_vector(t), t).unwrap();
            let start = Instant::now();
            let plan = gcp_opt_step(&y, m_prev, &p).unwrap();
            times.push(start.elapsed());
            m_prev = plan.m[0];
        }
        let gcp = median(times);
        worst = worst.max(vfw).max(gcp);
        lines.push(format!("D={d}: vfw {vfw:?} gcp {gcp:?}"));
    }
    outcome(
        "A9",
        worst < Duration::from_millis(10),
        format!("median step time {}", lines.join(", ")),
    )
}

fn energy_examples() -> Outcome {
    let pp = PowerParams::reference_server();
    let rec = |u: f64| MetricRecord {
        slot: 1,
        machine_id: "i-1".into(),
        u_cpu: u,
        disk_bytes: 0.0,
        disk_ops: 0.0,
        net_bytes: 0.0,
    };
    let busy = energy_from_metrics(&[rec(1.0)], &pp, 300.0).unwrap().energy_wh;
    let idle = energy_from_metrics(&[rec(0.0)], &pp, 300.0).unwrap().energy_wh;
    let none = energy_from_metrics(&[], &pp, 300.0).unwrap().energy_wh;
    let ok = (busy - 86.0 * 300.0 / 3600.0).abs() < 1e-12
        && (busy - 7.1667).abs() < 5e-5
        && (idle - 5.025).abs() < 1e-12
        && none == 0.0;
    outcome("A10", ok, format!("energy {busy} Wh busy, {idle} Wh idle, {none} Wh empty"))
}

fn main() {
    let start = Instant::now();
    let mut results = feasibility_suite();
    results.push(offline_oracle());
    results.push(edf_equivalence());
    results.push(savings_trend());
    results.push(estimation_examples());
    results.push(step_latency());
    results.push(energy_examples());
    let order = |id: &str| id[1..].parse::<u32>().unwrap_or(0);
    results.sort_by_key(|o| order(o.id));
    let mut failed = 0;
    for r in &results {
        println!("{:<4} {} {}", r.id, if r.passed { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.passed);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1?}",
        results.len() - failed,
        start.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
