//! Dense two-phase simplex for the small programs built by the provisioning
//! algorithms.
//!
//! Problems are stated as `min c·x` subject to rows `a·x {≤,=,≥} b` and
//! per-variable bounds `lower ≤ x ≤ upper` (upper may be `+∞`). Lower bounds
//! are removed by shifting; finite upper bounds become explicit `≤` rows.
//! Pricing uses the most negative reduced cost and falls back to Bland's
//! lowest-index rule after a run of degenerate pivots, which guarantees
//! termination on degenerate problems.

use thiserror::Error;

use crate::scalar::{snap, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("row {row} has {found} coefficients, expected {expected}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("variable {var} has lower bound {lower} above upper bound {upper}")]
    InvalidBound { var: usize, lower: f64, upper: f64 },
    #[error("variable {var} has a non-finite lower bound")]
    UnboundedBelow { var: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("variable index {0} out of range")]
    UnknownVariable(usize),
    #[error("absolute-value linearization needs a nonnegative weight, got {0}")]
    NegativeSwitchCoefficient(f64),
    #[error("absolute-value window is empty")]
    EmptyWindow,
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Bound<T> {
    pub fn nonnegative() -> Self {
        Self {
            lower: T::zero(),
            upper: T::infinity(),
        }
    }

    pub fn new(lower: T, upper: T) -> Self {
        Self { lower, upper }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
    pub bounds: Vec<Bound<T>>,
}

impl<T: Scalar> Default for LpProblem<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> LpProblem<T> {
    pub fn new() -> Self {
        Self {
            objective: Vec::new(),
            constraints: Vec::new(),
            bounds: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Appends a variable and pads every existing row with a zero coefficient.
    pub fn add_variable(&mut self, cost: T, bound: Bound<T>) -> usize {
        self.objective.push(cost);
        self.bounds.push(bound);
        for c in &mut self.constraints {
            c.coeffs.push(T::zero());
        }
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Adds a row given as `(variable, coefficient)` pairs.
    pub fn add_sparse_constraint(
        &mut self,
        terms: &[(usize, T)],
        relation: Relation,
        rhs: T,
    ) -> Result<(), LpError> {
        let n = self.num_vars();
        let mut coeffs = vec![T::zero(); n];
        for &(j, a) in terms {
            if j >= n {
                return Err(LpError::UnknownVariable(j));
            }
            coeffs[j] = coeffs[j] + a;
        }
        self.add_constraint(coeffs, relation, rhs);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::ArityMismatch {
                row: usize::MAX,
                expected: n,
                found: self.bounds.len(),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for (row, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::ArityMismatch {
                    row,
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite("constraint"));
            }
        }
        for (var, b) in self.bounds.iter().enumerate() {
            if !b.lower.is_finite() {
                return Err(LpError::UnboundedBelow { var });
            }
            if b.upper.is_nan() || b.lower > b.upper {
                return Err(LpError::InvalidBound {
                    var,
                    lower: b.lower.as_f64(),
                    upper: b.upper.as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, values: &[T]) -> T {
        self.objective
            .iter()
            .zip(values)
            .map(|(&c, &x)| c * x)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub values: Vec<T>,
    pub objective_value: T,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn without_point(status: LpStatus, n: usize) -> Self {
        Self {
            status,
            values: vec![T::nan(); n],
            objective_value: T::nan(),
        }
    }
}

/// Auxiliary variables introduced by [`linearize_abs_objective`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsTerms {
    pub ups: Vec<usize>,
    pub downs: Vec<usize>,
}

impl AbsTerms {
    /// `Σ (u_j + v_j)`, which equals `Σ |m_j − m_{j−1}|` at an optimal vertex.
    pub fn total<T: Scalar>(&self, values: &[T]) -> T {
        self.ups
            .iter()
            .chain(&self.downs)
            .map(|&j| values[j])
            .sum()
    }
}

/// Adds `energy_coeff·Σ m_j + switch_coeff·Σ |m_j − m_{j−1}|` to the objective
/// of `problem`, where `window` lists the capacity variables in slot order and
/// `m_{−1} = prev_capacity`.
///
/// Each absolute difference becomes a pair `u_j, v_j ≥ 0` with
/// `m_j − m_{j−1} − u_j + v_j = 0` and cost `switch_coeff` on both.
pub fn linearize_abs_objective<T: Scalar>(
    problem: &mut LpProblem<T>,
    window: &[usize],
    prev_capacity: T,
    energy_coeff: T,
    switch_coeff: T,
) -> Result<AbsTerms, LpError> {
    if window.is_empty() {
        return Err(LpError::EmptyWindow);
    }
    if switch_coeff < T::zero() || !switch_coeff.is_finite() {
        return Err(LpError::NegativeSwitchCoefficient(switch_coeff.as_f64()));
    }
    if let Some(&bad) = window.iter().find(|&&j| j >= problem.num_vars()) {
        return Err(LpError::UnknownVariable(bad));
    }
    for &j in window {
        problem.objective[j] = problem.objective[j] + energy_coeff;
    }
    let mut terms = AbsTerms {
        ups: Vec::with_capacity(window.len()),
        downs: Vec::with_capacity(window.len()),
    };
    for (k, &m) in window.iter().enumerate() {
        let u = problem.add_variable(switch_coeff, Bound::nonnegative());
        let v = problem.add_variable(switch_coeff, Bound::nonnegative());
        let mut row = vec![(m, T::one()), (u, -T::one()), (v, T::one())];
        let rhs = if k == 0 {
            prev_capacity
        } else {
            row.push((window[k - 1], -T::one()));
            T::zero()
        };
        problem.add_sparse_constraint(&row, Relation::Eq, rhs)?;
        terms.ups.push(u);
        terms.downs.push(v);
    }
    Ok(terms)
}

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 32;

pub fn solve_lp<T: Scalar>(problem: &LpProblem<T>) -> Result<LpSolution<T>, LpError> {
    problem.validate()?;
    let tol = T::lp_tolerance();
    let n = problem.num_vars();

    // Shift lower bounds to zero and turn finite upper bounds into rows.
    let lower: Vec<T> = problem.bounds.iter().map(|b| b.lower).collect();
    let mut rows: Vec<(Vec<T>, Relation, T)> = Vec::with_capacity(problem.constraints.len() + n);
    for c in &problem.constraints {
        let shift: T = c.coeffs.iter().zip(&lower).map(|(&a, &l)| a * l).sum();
        rows.push((c.coeffs.clone(), c.relation, c.rhs - shift));
    }
    for (j, b) in problem.bounds.iter().enumerate() {
        if b.upper.is_finite() {
            let mut coeffs = vec![T::zero(); n];
            coeffs[j] = T::one();
            rows.push((coeffs, Relation::Le, b.upper - b.lower));
        }
    }
    for (coeffs, rel, rhs) in &mut rows {
        if *rhs < T::zero() {
            coeffs.iter_mut().for_each(|a| *a = -*a);
            *rhs = -*rhs;
            *rel = match *rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let mut tableau = Tableau::build(n, &rows, tol);
    let limit = 50_000 + 100 * (tableau.rows + tableau.cols);

    if tableau.num_artificial > 0 {
        let mut phase1 = vec![T::zero(); tableau.cols];
        for c in phase1.iter_mut().skip(tableau.first_artificial) {
            *c = T::one();
        }
        tableau.set_objective(&phase1);
        match tableau.optimize(limit, tol, false)? {
            Outcome::Optimal => {}
            // Phase one is bounded below by zero.
            Outcome::Unbounded => unreachable!("phase one objective is bounded"),
        }
        let scale = rows
            .iter()
            .map(|r| r.2)
            .fold(T::one(), |a, b| if b > a { b } else { a });
        let infeasibility = -tableau.objective[tableau.cols];
        if infeasibility > T::lit(1e3) * tol * scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, n));
        }
        tableau.drive_out_artificials(tol);
    }

    let mut phase2 = vec![T::zero(); tableau.cols];
    phase2[..n].copy_from_slice(&problem.objective);
    tableau.set_objective(&phase2);
    match tableau.optimize(limit, tol, true)? {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Ok(LpSolution::without_point(LpStatus::Unbounded, n)),
    }

    let mut shifted = vec![T::zero(); n];
    for (i, &b) in tableau.basis.iter().enumerate() {
        if b < n {
            shifted[b] = tableau.rhs(i).max(T::zero());
        }
    }
    let values: Vec<T> = shifted
        .iter()
        .zip(&problem.bounds)
        .map(|(&s, b)| snap(s + b.lower, b.lower, b.upper, tol))
        .collect();
    let objective_value = problem.evaluate(&values);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective_value,
    })
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau<T> {
    rows: usize,
    cols: usize,
    width: usize,
    data: Vec<T>,
    objective: Vec<T>,
    basis: Vec<usize>,
    first_artificial: usize,
    num_artificial: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(n: usize, rows: &[(Vec<T>, Relation, T)], tol: T) -> Self {
        let m = rows.len();
        let num_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();

        // Structural columns that appear in exactly one row with a positive
        // coefficient can start in the basis in place of an artificial.
        let mut occurrences = vec![0usize; n];
        let mut last_row = vec![usize::MAX; n];
        for (i, (coeffs, _, _)) in rows.iter().enumerate() {
            for (j, a) in coeffs.iter().enumerate() {
                if *a != T::zero() {
                    occurrences[j] += 1;
                    last_row[j] = i;
                }
            }
        }
        let mut used = vec![false; n];
        let mut crash: Vec<Option<usize>> = vec![None; m];
        for (i, (coeffs, rel, _)) in rows.iter().enumerate() {
            if *rel == Relation::Le {
                continue;
            }
            crash[i] = (0..n).find(|&j| {
                !used[j] && occurrences[j] == 1 && last_row[j] == i && coeffs[j] > tol
            });
            if let Some(j) = crash[i] {
                used[j] = true;
            }
        }
        let num_artificial = rows
            .iter()
            .zip(&crash)
            .filter(|((_, rel, _), c)| *rel != Relation::Le && c.is_none())
            .count();

        let first_artificial = n + num_slack;
        let cols = first_artificial + num_artificial;
        let width = cols + 1;
        let mut data = vec![T::zero(); m * width];
        let mut basis = vec![0usize; m];
        let mut slack = n;
        let mut artificial = first_artificial;
        for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
            let row = &mut data[i * width..(i + 1) * width];
            row[..n].copy_from_slice(coeffs);
            row[cols] = *rhs;
            match rel {
                Relation::Le => {
                    row[slack] = T::one();
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -T::one();
                    slack += 1;
                }
                Relation::Eq => {}
            }
            if *rel != Relation::Le {
                if let Some(j) = crash[i] {
                    let pivot = row[j];
                    row.iter_mut().for_each(|v| *v = *v / pivot);
                    basis[i] = j;
                } else {
                    row[artificial] = T::one();
                    basis[i] = artificial;
                    artificial += 1;
                }
            }
        }
        Self {
            rows: m,
            cols,
            width,
            data,
            objective: vec![T::zero(); width],
            basis,
            first_artificial,
            num_artificial,
        }
    }

    fn rhs(&self, i: usize) -> T {
        self.data[i * self.width + self.cols]
    }

    /// Installs reduced costs `c − c_B·B⁻¹A`; the last entry holds `−c_B·b`.
    fn set_objective(&mut self, costs: &[T]) {
        self.objective[..self.cols].copy_from_slice(costs);
        self.objective[self.cols] = T::zero();
        for i in 0..self.rows {
            let cb = costs[self.basis[i]];
            if cb == T::zero() {
                continue;
            }
            let row = &self.data[i * self.width..(i + 1) * self.width];
            for (o, &a) in self.objective.iter_mut().zip(row) {
                *o = *o - cb * a;
            }
        }
    }

    fn optimize(&mut self, limit: usize, tol: T, exclude_artificial: bool) -> Result<Outcome, LpError> {
        let eligible = if exclude_artificial {
            self.first_artificial
        } else {
            self.cols
        };
        let mut degenerate = 0usize;
        for _ in 0..limit {
            let bland = degenerate >= DEGENERATE_STREAK;
            let entering = if bland {
                (0..eligible).find(|&j| self.objective[j] < -tol)
            } else {
                let mut best: Option<usize> = None;
                for j in 0..eligible {
                    let d = self.objective[j];
                    if d < -tol && best.map_or(true, |b| d < self.objective[b]) {
                        best = Some(j);
                    }
                }
                best
            };
            let Some(q) = entering else {
                return Ok(Outcome::Optimal);
            };

            // Among rows tied on the ratio, prefer the largest pivot element,
            // or the lowest basis index under Bland's rule.
            let pivot_tol = T::lit(1e3) * tol;
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows {
                let a = self.data[i * self.width + q];
                if a <= pivot_tol {
                    continue;
                }
                let ratio = self.rhs(i).max(T::zero()) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = ratio <= best + tol;
                        let better_tie = if bland {
                            self.basis[i] < self.basis[r]
                        } else {
                            a > self.data[r * self.width + q]
                        };
                        if ratio < best - tol || (tie && better_tie) {
                            Some((i, ratio.min(best)))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if ratio <= tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q);
        }
        Err(LpError::IterationLimit(limit))
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let start = r * w;
        let p = self.data[start + q];
        for v in &mut self.data[start..start + w] {
            *v = *v / p;
        }
        self.data[start + q] = T::one();
        let nz: Vec<usize> = (0..w)
            .filter(|&k| self.data[start + k] != T::zero())
            .collect();
        let pivot_row: Vec<T> = nz.iter().map(|&k| self.data[start + k]).collect();

        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let base = i * w;
            let f = self.data[base + q];
            if f == T::zero() {
                continue;
            }
            for (&k, &a) in nz.iter().zip(&pivot_row) {
                let cell = &mut self.data[base + k];
                *cell = *cell - f * a;
            }
            self.data[base + q] = T::zero();
        }
        let f = self.objective[q];
        if f != T::zero() {
            for (&k, &a) in nz.iter().zip(&pivot_row) {
                self.objective[k] = self.objective[k] - f * a;
            }
            self.objective[q] = T::zero();
        }
        self.basis[r] = q;
    }

    /// Pivots basic artificials (at zero level) out of the basis, dropping
    /// rows that turn out to be redundant.
    fn drive_out_artificials(&mut self, tol: T) {
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] < self.first_artificial {
                i += 1;
                continue;
            }
            let base = i * self.width;
            let candidate = (0..self.first_artificial)
                .filter(|&j| self.data[base + j].abs() > tol)
                .max_by(|&a, &b| {
                    self.data[base + a]
                        .abs()
                        .partial_cmp(&self.data[base + b].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
            match candidate {
                Some(q) => {
                    self.pivot(i, q);
                    i += 1;
                }
                None => self.remove_row(i),
            }
        }
    }

    fn remove_row(&mut self, i: usize) {
        let w = self.width;
        self.data.drain(i * w..(i + 1) * w);
        self.basis.remove(i);
        self.rows -= 1;
    }
}
