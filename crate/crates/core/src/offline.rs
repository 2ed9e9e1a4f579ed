//! Offline optimum over the whole horizon and EDF disaggregation.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{linearize_abs_objective, solve_lp, Bound, LpProblem, LpStatus, Relation};
use crate::scalar::{prefix_sums, Scalar};
use crate::workload::{delayed_curve, generalized_deadline_curve, DeadlineDecomposedLoad};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParams<T> {
    /// Cost per active server per slot.
    pub e0: T,
    /// Cost per unit of executed work.
    pub e1: T,
    /// Cost per unit change of capacity between slots.
    pub beta: T,
    pub fleet: T,
    pub slot_seconds: f64,
}

impl<T: Scalar> CostParams<T> {
    pub fn new(e0: T, e1: T, beta: T, fleet: T) -> Self {
        Self {
            e0,
            e1,
            beta,
            fleet,
            slot_seconds: 300.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.e0 >= T::zero()
            && self.e1 >= T::zero()
            && self.e0 + self.e1 > T::zero()
            && self.beta >= T::zero()
            && self.fleet > T::zero()
            && [self.e0, self.e1, self.beta, self.fleet].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "cost parameters need e0, e1, beta >= 0, e0 + e1 > 0 and fleet > 0 (got e0={}, e1={}, beta={}, fleet={})",
                self.e0, self.e1, self.beta, self.fleet
            )))
        }
    }

    pub fn energy(&self) -> T {
        self.e0 + self.e1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Offline,
    Vfw,
    Gcp,
    Follow,
    #[serde(rename = "none")]
    NoProvisioning,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Offline => "offline",
            Provenance::Vfw => "vfw",
            Provenance::Gcp => "gcp",
            Provenance::Follow => "follow",
            Provenance::NoProvisioning => "none",
        }
    }
}

/// Capacity `m` and executed work `x` per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySchedule<T> {
    pub m: Vec<T>,
    pub x: Vec<T>,
    /// `by_deadline[d][t]`: work executed in slot `t` that had `d` slots of
    /// slack left, when the algorithm tracks it.
    pub by_deadline: Option<Vec<Vec<T>>>,
    pub provenance: Provenance,
}

impl<T: Scalar> CapacitySchedule<T> {
    pub fn horizon(&self) -> usize {
        self.m.len()
    }

    pub fn total_capacity(&self) -> T {
        self.m.iter().copied().sum()
    }

    pub fn total_work(&self) -> T {
        self.x.iter().copied().sum()
    }

    /// Checks `0 ≤ x ≤ m ≤ M`, the cumulative deadline (C1) and release (C2)
    /// constraints, and that all released work is executed. Curves shorter
    /// than the schedule are treated as zero-padded.
    pub fn check(&self, released: &[T], deadline_curve: &[T], fleet: T, tol: T) -> Result<()> {
        let h = self.horizon();
        if self.x.len() != h {
            return Err(Error::HorizonMismatch(h, self.x.len()));
        }
        if released.len() > h || deadline_curve.len() > h {
            return Err(Error::HorizonMismatch(h, released.len().max(deadline_curve.len())));
        }
        let at = |v: &[T], t: usize| v.get(t).copied().unwrap_or_else(T::zero);
        let (mut cx, mut cl, mut cd) = (T::zero(), T::zero(), T::zero());
        for t in 0..h {
            let (m, x) = (self.m[t], self.x[t]);
            if x < -tol || x > m + tol || m > fleet + tol {
                return Err(Error::ScheduleViolation {
                    constraint: "0 <= x <= m <= M",
                    slot: t,
                    detail: format!("x={x}, m={m}, M={fleet}"),
                });
            }
            cx = cx + x;
            cl = cl + at(released, t);
            cd = cd + at(deadline_curve, t);
            if cx < cd - tol {
                return Err(Error::ScheduleViolation {
                    constraint: "C1 deadline",
                    slot: t,
                    detail: format!("executed {cx} < due {cd}"),
                });
            }
            if cx > cl + tol {
                return Err(Error::ScheduleViolation {
                    constraint: "C2 release",
                    slot: t,
                    detail: format!("executed {cx} > released {cl}"),
                });
            }
        }
        if (cx - cl).abs() > tol {
            return Err(Error::ScheduleViolation {
                constraint: "completion",
                slot: h.saturating_sub(1),
                detail: format!("executed {cx} of {cl}"),
            });
        }
        Ok(())
    }

    /// Rounds every capacity up to a whole server (capped at the fleet size).
    pub fn rounded_up(&self, fleet: T) -> Self {
        let tol = T::check_tolerance();
        Self {
            m: self.m.iter().map(|&m| (m - tol).ceil().max(T::zero()).min(fleet)).collect(),
            ..self.clone()
        }
    }

    /// `slot,m,x` CSV with 1-based slots.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "m", "x"])?;
        for t in 0..self.horizon() {
            w.write_record([(t + 1).to_string(), self.m[t].to_string(), self.x[t].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest cumulative execution reachable when running flat out:
/// `X_t = min(ΣL_{≤t}, X_{t−1} + M)`. The program is feasible iff this
/// envelope never falls below the cumulative deadline curve and reaches the
/// total.
fn first_infeasible_slot<T: Scalar>(released: &[T], deadline_curve: &[T], fleet: T) -> Option<(usize, String)> {
    let tol = T::check_tolerance();
    let cl = prefix_sums(released);
    let cd = prefix_sums(deadline_curve);
    let mut reach = T::zero();
    for t in 0..cl.len() {
        if cd[t] > cl[t] + tol {
            return Some((t, format!("due {} exceeds released {}", cd[t], cl[t])));
        }
        reach = cl[t].min(reach + fleet);
        if reach < cd[t] - tol {
            return Some((t, format!("due {} but at most {} executable with {} servers", cd[t], reach, fleet)));
        }
    }
    let total = cl.last().copied().unwrap_or_else(T::zero);
    if reach < total - tol {
        return Some((cl.len() - 1, format!("only {reach} of {total} executable by the horizon end")));
    }
    None
}

/// Solves the offline program for a released curve and a deadline curve of
/// equal length:
///
/// minimize `Σ (e0·m_t + e1·x_t) + β Σ |m_t − m_{t−1}|` subject to
/// `Σ_{j≤t} l_j ≤ Σ_{j≤t} x_j ≤ Σ_{j≤t} L_j`, `Σ x = Σ L` and
/// `0 ≤ x_t ≤ m_t ≤ M`, with `m_{−1} = 0`.
///
/// Executed work is carried as cumulative variables `X_t = Σ_{j≤t} x_j`, which
/// turns both cumulative constraints into bounds.
pub fn solve_offline<T: Scalar>(released: &[T], deadline_curve: &[T], params: &CostParams<T>) -> Result<CapacitySchedule<T>> {
    params.validate()?;
    if released.len() != deadline_curve.len() {
        return Err(Error::HorizonMismatch(released.len(), deadline_curve.len()));
    }
    if let Some(t) = released.iter().position(|&v| v < T::zero()) {
        return Err(Error::invalid(format!("negative released load at slot {t}")));
    }
    let h = released.len();
    if h == 0 {
        return Ok(CapacitySchedule {
            m: vec![],
            x: vec![],
            by_deadline: None,
            provenance: Provenance::Offline,
        });
    }
    if let Some((slot, detail)) = first_infeasible_slot(released, deadline_curve, params.fleet) {
        return Err(Error::OfflineInfeasible { slot, detail });
    }

    let cl = prefix_sums(released);
    let cd = prefix_sums(deadline_curve);
    let total = cl[h - 1];
    let mut lp = LpProblem::new();
    let cum: Vec<usize> = (0..h)
        .map(|t| {
            let (lo, hi) = if t + 1 == h {
                (total, total)
            } else {
                (cd[t].min(cl[t]), cl[t])
            };
            let cost = if t + 1 == h { params.e1 } else { T::zero() };
            lp.add_variable(cost, Bound::new(lo, hi))
        })
        .collect();
    let cap: Vec<usize> = (0..h)
        .map(|_| lp.add_variable(T::zero(), Bound::new(T::zero(), params.fleet)))
        .collect();
    for t in 0..h {
        // X_{t−1} − X_t ≤ 0 and X_t − X_{t−1} − m_t ≤ 0.
        let mut nonneg = vec![(cum[t], -T::one())];
        let mut within = vec![(cum[t], T::one()), (cap[t], -T::one())];
        if t > 0 {
            nonneg.push((cum[t - 1], T::one()));
            within.push((cum[t - 1], -T::one()));
        }
        lp.add_sparse_constraint(&nonneg, Relation::Le, T::zero())?;
        lp.add_sparse_constraint(&within, Relation::Le, T::zero())?;
    }
    linearize_abs_objective(&mut lp, &cap, T::zero(), params.e0, params.beta)?;

    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        status => {
            return Err(Error::OfflineInfeasible {
                slot: h - 1,
                detail: format!("solver reported {status:?}"),
            })
        }
    }
    let mut m = Vec::with_capacity(h);
    let mut x = Vec::with_capacity(h);
    let mut prev = T::zero();
    for t in 0..h {
        let mt = sol.values[cap[t]].max(T::zero()).min(params.fleet);
        let xt = (sol.values[cum[t]] - prev).max(T::zero()).min(mt);
        prev = sol.values[cum[t]];
        m.push(mt);
        x.push(xt);
    }
    Ok(CapacitySchedule {
        m,
        x,
        by_deadline: None,
        provenance: Provenance::Offline,
    })
}

/// Offline optimum with one deadline `D` for all work; the horizon is
/// extended by `D` empty slots so late releases can finish.
pub fn solve_offline_uniform<T: Scalar>(released: &[T], deadline: usize, params: &CostParams<T>) -> Result<CapacitySchedule<T>> {
    let mut padded = released.to_vec();
    padded.resize(released.len() + deadline, T::zero());
    let due = delayed_curve(&padded, deadline);
    solve_offline(&padded, &due, params)
}

/// Offline optimum for per-deadline load, horizon extended by `ν` slots.
pub fn solve_offline_decomposed<T: Scalar>(decomp: &DeadlineDecomposedLoad<T>, params: &CostParams<T>) -> Result<CapacitySchedule<T>> {
    let padded = decomp.padded(decomp.max_deadline());
    let due = generalized_deadline_curve(&padded);
    solve_offline(&padded.totals(), &due, params)
}

/// Work released in slot `release` with relative deadline `deadline`,
/// executed in slot `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdfAssignment<T> {
    pub release: usize,
    pub deadline: usize,
    pub slot: usize,
    pub amount: T,
}

struct Pending<T> {
    due: usize,
    release: usize,
    deadline: usize,
    remaining: T,
}

/// Splits per-slot execution `x` into per-(release, deadline) assignments by
/// serving pending work in order of absolute deadline, then release slot.
pub fn disaggregate_edf<T: Scalar>(x: &[T], decomp: &DeadlineDecomposedLoad<T>) -> Result<Vec<EdfAssignment<T>>> {
    let tol = T::check_tolerance();
    let mut pending: Vec<Pending<T>> = Vec::new();
    let mut out = Vec::new();
    let horizon = x.len().max(decomp.horizon());
    for t in 0..horizon {
        for (d, &amount) in decomp.release_vector(t).iter().enumerate() {
            if amount > T::zero() {
                pending.push(Pending {
                    due: t + d,
                    release: t,
                    deadline: d,
                    remaining: amount,
                });
            }
        }
        pending.sort_by_key(|p| (p.due, p.release));
        let mut budget = x.get(t).copied().unwrap_or_else(T::zero);
        for p in pending.iter_mut() {
            if budget <= T::zero() {
                break;
            }
            let served = budget.min(p.remaining);
            if served > T::zero() {
                out.push(EdfAssignment {
                    release: p.release,
                    deadline: p.deadline,
                    slot: t,
                    amount: served,
                });
                p.remaining = p.remaining - served;
                budget = budget - served;
            }
        }
        if budget > tol {
            return Err(Error::ScheduleViolation {
                constraint: "C2 release",
                slot: t,
                detail: format!("{budget} units executed with nothing pending"),
            });
        }
        let shortfall: T = pending
            .iter()
            .filter(|p| p.due <= t)
            .map(|p| p.remaining)
            .sum();
        if shortfall > tol {
            return Err(Error::DeadlineViolation {
                slot: t,
                shortfall: shortfall.as_f64(),
            });
        }
        pending.retain(|p| p.remaining > tol);
    }
    if let Some(p) = pending.first() {
        return Err(Error::DeadlineViolation {
            slot: p.due,
            shortfall: pending.iter().map(|p| p.remaining).sum::<T>().as_f64(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(e0: f64, e1: f64, beta: f64, fleet: f64) -> CostParams<f64> {
        CostParams::new(e0, e1, beta, fleet)
    }

    fn cost(s: &CapacitySchedule<f64>, p: &CostParams<f64>) -> f64 {
        let mut prev = 0.0;
        let mut total = 0.0;
        for t in 0..s.horizon() {
            total += p.e0 * s.m[t] + p.e1 * s.x[t] + p.beta * (s.m[t] - prev).abs();
            prev = s.m[t];
        }
        total
    }

    #[test]
    fn constant_load_stays_flat() {
        let p = params(1.0, 0.5, 3.0, 10.0);
        let s = solve_offline_uniform(&[2.0; 5], 0, &p).unwrap();
        assert!((cost(&s, &p) - (5.0 * 1.5 * 2.0 + 3.0 * 2.0)).abs() < 1e-6);
        // With slack the work spreads evenly over the padded horizon.
        for d in [1, 3] {
            let s = solve_offline_uniform(&[2.0; 5], d, &p).unwrap();
            let level = 10.0 / (5 + d) as f64;
            assert!((cost(&s, &p) - (15.0 + 3.0 * level)).abs() < 1e-6, "D={d}");
        }
    }

    #[test]
    fn two_slot_example() {
        let p = params(1.0, 0.0, 1.0, 10.0);
        let s = solve_offline(&[2.0, 0.0], &[0.0, 2.0], &p).unwrap();
        assert!((cost(&s, &p) - 3.0).abs() < 1e-6);
        assert!((s.m[0] - 1.0).abs() < 1e-6 && (s.m[1] - 1.0).abs() < 1e-6);
        s.check(&[2.0, 0.0], &[0.0, 2.0], 10.0, 1e-6).unwrap();

        let mut decomp = DeadlineDecomposedLoad::zeros(1, 2);
        decomp.loads[1][0] = 2.0;
        let a = disaggregate_edf(&s.x, &decomp).unwrap();
        assert!(a.iter().all(|a| a.slot <= a.release + a.deadline));
    }

    #[test]
    fn zero_switching_cost_pays_only_operating() {
        let p = params(1.0, 0.25, 0.0, 10.0);
        let l = [3.0, 0.0, 5.0, 1.0];
        let s = solve_offline_uniform(&l, 2, &p).unwrap();
        assert!((cost(&s, &p) - 1.25 * 9.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_reports_slot() {
        let p = params(1.0, 0.0, 1.0, 1.0);
        let err = solve_offline(&[3.0, 0.0], &[0.0, 3.0], &p).unwrap_err();
        assert!(matches!(err, Error::OfflineInfeasible { slot: 1, .. }), "{err}");
    }

    #[test]
    fn edf_serves_all_when_capacity_covers() {
        let mut d = DeadlineDecomposedLoad::zeros(2, 1);
        d.loads[0][0] = 1.0;
        d.loads[2][0] = 1.0;
        let a = disaggregate_edf(&[2.0], &d).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|a| a.slot == 0));
    }

    #[test]
    fn edf_serves_earliest_deadline_first() {
        let mut d = DeadlineDecomposedLoad::zeros(1, 2);
        d.loads[0][0] = 1.0;
        d.loads[1][0] = 1.0;
        let a = disaggregate_edf(&[1.0, 1.0], &d).unwrap();
        assert_eq!((a[0].slot, a[0].deadline), (0, 0));
        assert_eq!((a[1].slot, a[1].deadline), (1, 1));
    }

    #[test]
    fn edf_reports_miss() {
        let mut d = DeadlineDecomposedLoad::zeros(0, 2);
        d.loads[0][0] = 2.0;
        let err = disaggregate_edf(&[1.0, 1.0], &d).unwrap_err();
        assert!(matches!(err, Error::DeadlineViolation { slot: 0, .. }));
    }

    #[test]
    fn check_flags_each_constraint() {
        let s = CapacitySchedule {
            m: vec![1.0, 1.0],
            x: vec![1.0, 1.0],
            by_deadline: None,
            provenance: Provenance::Follow,
        };
        assert!(s.check(&[1.0, 1.0], &[1.0, 1.0], 1.0, 1e-9).is_ok());
        assert!(s.check(&[0.0, 2.0], &[0.0, 2.0], 1.0, 1e-9).is_err());
        assert!(s.check(&[2.0, 0.0], &[2.0, 0.0], 1.0, 1e-9).is_err());
        assert!(s.check(&[1.0, 1.0], &[1.0, 1.0], 0.5, 1e-9).is_err());
    }

    #[test]
    fn rounding_up_keeps_feasibility() {
        let p = params(1.0, 0.0, 12.0, 10.0);
        let l = [1.5, 0.2, 2.7, 0.0];
        let s = solve_offline_uniform(&l, 1, &p).unwrap();
        let r = s.rounded_up(p.fleet);
        assert!(r.m.iter().all(|m| m.fract() == 0.0));
        let mut padded = l.to_vec();
        padded.push(0.0);
        r.check(&padded, &delayed_curve(&padded, 1), p.fleet, 1e-6).unwrap();
    }
}
