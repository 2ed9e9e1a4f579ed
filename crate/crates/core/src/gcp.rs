//! Online provisioning for per-job deadlines.
//!
//! The state is the unassigned-work vector `y`, where `y[d]` must run within
//! `d` more slots. Every slot plans `m_t..m_{t+ν}` so that all of `y` runs in
//! the window and every prefix of deadlines is met, then commits `m_t`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::offline::{CapacitySchedule, CostParams, Provenance};
use crate::prep::NonPreemptiveHead;
use crate::scalar::Scalar;
use crate::window::{WindowPlan, WindowProgram};
use crate::workload::DeadlineDecomposedLoad;

/// Spends `m_prev` on `y` in deadline order, shifts the remainder down one
/// deadline and adds `released`. Fails if deadline-0 work was left over.
pub fn update_unassigned<T: Scalar>(y: &[T], m_prev: T, released: &[T], slot: usize) -> Result<Vec<T>> {
    let tol = T::check_tolerance();
    if let Some(&due) = y.first() {
        if due - m_prev > tol {
            return Err(Error::DeadlineViolation {
                slot,
                shortfall: (due - m_prev).as_f64(),
            });
        }
    }
    let mut budget = m_prev.max(T::zero());
    let mut left: Vec<T> = y
        .iter()
        .map(|&v| {
            let served = budget.min(v);
            budget = budget - served;
            (v - served).max(T::zero())
        })
        .collect();
    if !left.is_empty() {
        left.remove(0);
    }
    let width = left.len().max(released.len());
    left.resize(width, T::zero());
    for (slot_left, &r) in left.iter_mut().zip(released) {
        *slot_left = *slot_left + r;
    }
    Ok(left)
}

/// Window program over `ν + 1 = y.len()` slots for the backlog `y`.
pub fn gcp_program<T: Scalar>(y: &[T], m_prev: T, params: &CostParams<T>) -> WindowProgram<T> {
    let mut acc = T::zero();
    let prefix: Vec<T> = y
        .iter()
        .map(|&v| {
            acc = acc + v;
            acc
        })
        .collect();
    let total = acc;
    WindowProgram {
        width: y.len().max(1),
        prev: m_prev,
        total,
        prefix: prefix[..y.len().saturating_sub(1)].to_vec(),
        fleet: params.fleet,
        energy: params.energy(),
        beta: params.beta,
    }
}

pub fn gcp_opt_step<T: Scalar>(y: &[T], m_prev: T, params: &CostParams<T>) -> Result<WindowPlan<T>> {
    gcp_program(y, m_prev, params).solve()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GcpStep<T> {
    pub slot: usize,
    pub m: T,
    pub x: T,
    /// Unassigned work left after this slot.
    pub backlog: T,
}

#[derive(Debug, Clone)]
pub struct GcpOutcome<T> {
    pub schedule: CapacitySchedule<T>,
    pub steps: Vec<GcpStep<T>>,
    /// Released load including continuation pieces of non-preemptive jobs.
    pub released: DeadlineDecomposedLoad<T>,
}

#[derive(Debug, Clone)]
struct Piece<T> {
    due: usize,
    release: usize,
    deadline: usize,
    seq: usize,
    remaining: T,
    head: Option<usize>,
}

/// Runs the online loop. `heads` are non-preemptive jobs whose remaining
/// pieces are released one per slot after the head has run.
pub fn run_gcp_with_heads<T: Scalar>(
    decomp: &DeadlineDecomposedLoad<T>,
    heads: &[NonPreemptiveHead],
    params: &CostParams<T>,
) -> Result<GcpOutcome<T>> {
    params.validate()?;
    let tol = T::check_tolerance();
    let mut nu = decomp.max_deadline();
    for h in heads {
        nu = nu.max(h.head.deadline_slots);
        if !(h.head.load >= 0.0) {
            return Err(Error::invalid(format!("negative piece load for job {}", h.head.parent_id)));
        }
    }
    let release_end = heads
        .iter()
        .map(|h| h.head.release_slot + 1)
        .fold(decomp.horizon(), usize::max);
    let cap = release_end + nu + 1 + heads.iter().map(|h| h.length).sum::<usize>();

    let mut released = DeadlineDecomposedLoad::zeros(nu, release_end + nu);
    let mut extra: BTreeMap<usize, Vec<(usize, T, Option<usize>)>> = BTreeMap::new();
    for (i, h) in heads.iter().enumerate() {
        extra
            .entry(h.head.release_slot)
            .or_default()
            .push((h.head.deadline_slots, T::lit(h.head.load), Some(i)));
    }

    let mut pieces: Vec<Piece<T>> = Vec::new();
    let mut seq = 0;
    let mut y: Vec<T> = vec![T::zero(); nu + 1];
    let mut m_prev = T::zero();
    let mut ms = Vec::new();
    let mut by_deadline = vec![Vec::<T>::new(); nu + 1];
    let mut steps = Vec::new();
    let mut t = 0;
    loop {
        let mut arriving = vec![T::zero(); nu + 1];
        for (d, &v) in decomp.release_vector(t).iter().enumerate() {
            if v > T::zero() {
                arriving[d] = arriving[d] + v;
                pieces.push(Piece { due: t + d, release: t, deadline: d, seq, remaining: v, head: None });
                seq += 1;
            }
        }
        for (d, v, head) in extra.remove(&t).unwrap_or_default() {
            if v > T::zero() {
                arriving[d] = arriving[d] + v;
                pieces.push(Piece { due: t + d, release: t, deadline: d, seq, remaining: v, head });
                seq += 1;
            }
        }
        for (d, &v) in arriving.iter().enumerate() {
            if v > T::zero() {
                released.add(d, t, v);
            }
        }
        y = update_unassigned(&y, m_prev, &arriving, t)?;
        let pending: T = y.iter().copied().sum();
        if t >= release_end + nu && pending <= tol && extra.is_empty() {
            break;
        }
        if t >= cap {
            return Err(Error::Consistency {
                slot: t,
                detail: format!("backlog {pending} not drained"),
            });
        }

        let plan = gcp_opt_step(&y, m_prev, params).map_err(|e| match e {
            Error::Unschedulable(msg) => Error::Unschedulable(format!("slot {t}: {msg}")),
            other => other,
        })?;
        let m = plan.m[0].max(T::zero()).min(params.fleet);

        pieces.sort_by_key(|p| (p.due, p.release, p.seq));
        let mut budget = m;
        for col in by_deadline.iter_mut() {
            col.push(T::zero());
        }
        for p in pieces.iter_mut() {
            if budget <= T::zero() {
                break;
            }
            let served = budget.min(p.remaining);
            p.remaining = p.remaining - served;
            budget = budget - served;
            by_deadline[p.deadline][t] = by_deadline[p.deadline][t] + served;
            if let Some(i) = p.head {
                if p.remaining <= tol {
                    let h = &heads[i];
                    for c in h.continuation_pieces(t) {
                        extra
                            .entry(c.release_slot)
                            .or_default()
                            .push((0, T::lit(c.load), None));
                    }
                    p.head = None;
                }
            }
        }
        pieces.retain(|p| p.remaining > tol);

        ms.push(m);
        steps.push(GcpStep {
            slot: t,
            m,
            x: m,
            backlog: (pending - m).max(T::zero()),
        });
        m_prev = m;
        t += 1;
    }

    let horizon = ms.len();
    for row in released.loads.iter_mut() {
        row.resize(horizon, T::zero());
    }
    Ok(GcpOutcome {
        schedule: CapacitySchedule {
            m: ms.clone(),
            x: ms,
            by_deadline: Some(by_deadline),
            provenance: Provenance::Gcp,
        },
        steps,
        released,
    })
}

/// Runs GCP on preemptible load; the horizon is padded by `ν` slots.
pub fn run_gcp<T: Scalar>(decomp: &DeadlineDecomposedLoad<T>, params: &CostParams<T>) -> Result<GcpOutcome<T>> {
    run_gcp_with_heads(decomp, &[], params)
}

/// GCP with one deadline for all work.
pub fn run_gcp_uniform<T: Scalar>(load: &[T], deadline: usize, params: &CostParams<T>) -> Result<GcpOutcome<T>> {
    run_gcp(&DeadlineDecomposedLoad::uniform(load, deadline), params)
}

/// `t,m,x,backlog` CSV with 1-based slots.
pub fn write_steps_csv<T: Scalar, W: Write>(steps: &[GcpStep<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "m", "x", "backlog"])?;
    for s in steps {
        w.write_record([
            (s.slot + 1).to_string(),
            s.m.to_string(),
            s.x.to_string(),
            s.backlog.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prep::decompose_nonpreemptive;
    use crate::workload::generalized_deadline_curve;

    fn params(beta: f64) -> CostParams<f64> {
        CostParams::new(1.0, 0.0, beta, 10.0)
    }

    fn check(out: &GcpOutcome<f64>) {
        let due = generalized_deadline_curve(&out.released);
        out.schedule
            .check(&out.released.totals(), &due, 10.0, 1e-6)
            .unwrap();
    }

    #[test]
    fn update_examples() {
        assert_eq!(update_unassigned(&[3.0, 2.0, 1.0], 4.0, &[0.0; 3], 0).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(update_unassigned(&[0.0; 3], 5.0, &[2.0, 0.0, 1.0], 0).unwrap(), vec![2.0, 0.0, 1.0]);
        let err = update_unassigned(&[3.0, 2.0, 1.0], 0.0, &[1.0, 0.0, 0.0], 7).unwrap_err();
        assert!(matches!(err, Error::DeadlineViolation { slot: 7, .. }));
    }

    #[test]
    fn step_example() {
        let plan = gcp_opt_step(&[2.0, 0.0, 2.0], 2.0, &params(12.0)).unwrap();
        let expected = [2.0, 1.0, 1.0];
        for (m, e) in plan.m.iter().zip(expected) {
            assert!((m - e).abs() < 1e-9, "{:?}", plan.m);
        }
        assert!((plan.objective - 16.0).abs() < 1e-9);
    }

    #[test]
    fn step_edges() {
        let p = params(12.0);
        let zero = gcp_opt_step(&[0.0; 4], 3.0, &p).unwrap();
        assert!(zero.m.iter().all(|&m| m == 0.0));
        let tight = gcp_opt_step(&[10.0, 1.0, 0.0], 0.0, &p).unwrap();
        assert!((tight.m[0] - 10.0).abs() < 1e-9);
        assert!(matches!(gcp_opt_step(&[11.0, 0.0], 0.0, &p), Err(Error::Unschedulable(_))));
    }

    #[test]
    fn single_unit_job() {
        let mut d = DeadlineDecomposedLoad::zeros(0, 3);
        d.loads[0][0] = 1.0;
        let out = run_gcp(&d, &params(12.0)).unwrap();
        assert_eq!(out.schedule.m, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn two_jobs_spread_when_switching_is_expensive() {
        let mut d = DeadlineDecomposedLoad::zeros(1, 1);
        d.loads[0][0] = 1.0;
        d.loads[1][0] = 1.0;
        let out = run_gcp(&d, &params(12.0)).unwrap();
        assert_eq!(out.schedule.m, vec![1.0, 1.0]);
        check(&out);
    }

    #[test]
    fn zero_deadlines_follow_the_load() {
        let load = [2.0, 6.0, 2.0, 0.0, 3.5];
        let out = run_gcp_uniform(&load, 0, &params(12.0)).unwrap();
        assert_eq!(out.schedule.m, load.to_vec());
    }

    #[test]
    fn uniform_runs_drain_and_stay_feasible() {
        let load = [0.0, 9.0, 0.0, 0.0, 10.0, 1.0, 0.0, 7.0, 7.0, 0.5, 0.0, 0.0, 3.0];
        for d in 0..8 {
            let out = run_gcp_uniform(&load, d, &params(12.0)).unwrap();
            assert_eq!(out.schedule.horizon(), load.len() + d);
            check(&out);
            let total: f64 = load.iter().sum();
            assert!((out.schedule.total_work() - total).abs() < 1e-6);
        }
    }

    #[test]
    fn by_deadline_breakdown_sums_to_x() {
        let mut d = DeadlineDecomposedLoad::zeros(3, 4);
        d.loads[0][0] = 1.0;
        d.loads[3][0] = 4.0;
        d.loads[1][2] = 2.0;
        let out = run_gcp(&d, &params(12.0)).unwrap();
        let cols = out.schedule.by_deadline.as_ref().unwrap();
        for t in 0..out.schedule.horizon() {
            let s: f64 = cols.iter().map(|c| c[t]).sum();
            assert!((s - out.schedule.x[t]).abs() < 1e-9);
        }
        check(&out);
    }

    #[test]
    fn nonpreemptive_continuations_follow_the_head() {
        let head = decompose_nonpreemptive("long", 1, 6, 3, 1.0).unwrap();
        let d = DeadlineDecomposedLoad::<f64>::zeros(0, 2);
        let out = run_gcp_with_heads(&d, &[head], &params(12.0)).unwrap();
        check(&out);
        assert!((out.schedule.total_work() - 3.0).abs() < 1e-9);
        let deadline_zero: f64 = out.released.loads[0].iter().sum();
        assert!((deadline_zero - 2.0).abs() < 1e-9);
        let head_slot = out.released.loads[0].iter().position(|&v| v > 0.0).unwrap() - 1;
        assert!(out.schedule.x[head_slot] > 0.0);
        assert!(head_slot + 2 < out.schedule.horizon());
    }
}
