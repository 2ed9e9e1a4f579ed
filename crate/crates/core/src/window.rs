//! Receding-horizon capacity program shared by the online algorithms.

use crate::error::{Error, Result};
use crate::lp::{linearize_abs_objective, solve_lp, Bound, LpProblem, LpStatus, Relation};
use crate::scalar::Scalar;

/// One window program:
///
/// minimize `energy·Σ m_j + β Σ |m_j − m_{j−1}|` with `m_{−1} = prev`,
/// subject to `Σ m_j = total`, `Σ_{k≤j} m_k ≥ prefix[j]` and `0 ≤ m_j ≤ fleet`.
///
/// `prefix` may be shorter than the window; missing entries are unconstrained.
#[derive(Debug, Clone)]
pub struct WindowProgram<T> {
    pub width: usize,
    pub prev: T,
    pub total: T,
    pub prefix: Vec<T>,
    pub fleet: T,
    pub energy: T,
    pub beta: T,
}

#[derive(Debug, Clone)]
pub struct WindowPlan<T> {
    pub m: Vec<T>,
    pub objective: T,
}

impl<T: Scalar> WindowProgram<T> {
    /// First prefix whose demand cannot be met at full capacity.
    pub fn infeasible_prefix(&self) -> Option<usize> {
        let tol = T::check_tolerance();
        let last = self.width.saturating_sub(1);
        if self.total > T::from_usize_lossy(self.width) * self.fleet + tol {
            return Some(last);
        }
        self.prefix
            .iter()
            .take(self.width)
            .enumerate()
            .find(|&(j, &b)| b > T::from_usize_lossy(j + 1) * self.fleet + tol || b > self.total + tol)
            .map(|(j, _)| j)
    }

    pub fn solve(&self) -> Result<WindowPlan<T>> {
        if self.width == 0 {
            return Err(Error::invalid("empty planning window"));
        }
        if let Some(j) = self.infeasible_prefix() {
            let demand = self.prefix.get(j).copied().unwrap_or(self.total);
            return Err(Error::Unschedulable(format!(
                "window prefix {j} needs {demand} with {} servers per slot (window total {})",
                self.fleet, self.total
            )));
        }
        let tol = T::lp_tolerance();
        if self.total <= tol {
            let objective = self.beta * self.prev;
            return Ok(WindowPlan {
                m: vec![T::zero(); self.width],
                objective,
            });
        }
        let total = self.total;
        let mut lp = LpProblem::new();
        let m: Vec<usize> = (0..self.width)
            .map(|_| lp.add_variable(T::zero(), Bound::new(T::zero(), self.fleet.min(total))))
            .collect();
        let all: Vec<(usize, T)> = m.iter().map(|&v| (v, T::one())).collect();
        lp.add_sparse_constraint(&all, Relation::Eq, total)?;
        for (j, &b) in self.prefix.iter().enumerate().take(self.width - 1) {
            if b > tol {
                lp.add_sparse_constraint(&all[..=j], Relation::Ge, b.min(total))?;
            }
        }
        linearize_abs_objective(&mut lp, &m, self.prev, self.energy, self.beta)?;
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Unschedulable(format!("window program {:?}", sol.status)));
        }
        Ok(WindowPlan {
            m: m.iter().map(|&v| sol.values[v].max(T::zero()).min(self.fleet)).collect(),
            objective: sol.objective_value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn program(prev: f64, total: f64, prefix: Vec<f64>, width: usize) -> WindowProgram<f64> {
        WindowProgram {
            width,
            prev,
            total,
            prefix,
            fleet: 10.0,
            energy: 1.0,
            beta: 12.0,
        }
    }

    #[test]
    fn keeps_level_when_possible() {
        let plan = program(2.0, 4.0, vec![1.0], 2).solve().unwrap();
        assert!((plan.m[0] - 2.0).abs() < 1e-9 && (plan.m[1] - 2.0).abs() < 1e-9);
        assert!((plan.objective - 4.0).abs() < 1e-9);
    }

    #[test]
    fn ramps_down_gradually() {
        let plan = program(2.0, 4.0, vec![2.0, 2.0], 3).solve().unwrap();
        assert!((plan.m[0] - 2.0).abs() < 1e-9);
        assert!((plan.objective - 16.0).abs() < 1e-9);
    }

    #[test]
    fn zero_total_shuts_down() {
        let plan = program(3.0, 0.0, vec![], 4).solve().unwrap();
        assert!(plan.m.iter().all(|&m| m == 0.0));
        assert!((plan.objective - 36.0).abs() < 1e-12);
    }

    #[test]
    fn prefix_over_capacity_is_unschedulable() {
        let p = program(0.0, 25.0, vec![15.0], 3);
        assert_eq!(p.infeasible_prefix(), Some(0));
        assert!(matches!(p.solve(), Err(Error::Unschedulable(_))));
    }
}
