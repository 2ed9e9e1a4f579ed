#![allow(dead_code)]

use deferral::harness::{synth_workload, SynthKind, SynthSpec};
use deferral::lp::{LpProblem, Relation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// Minimum over all basic feasible points of a problem whose variables all
/// have finite bounds. `None` when no vertex is feasible.
pub fn vertex_enumeration(p: &LpProblem<f64>) -> Option<f64> {
    let n = p.num_vars();
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = p
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.relation, c.rhs))
        .collect();
    for (j, b) in p.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), Relation::Ge, b.lower));
        assert!(b.upper.is_finite(), "oracle needs finite bounds");
        rows.push((e, Relation::Le, b.upper));
    }
    let feasible = |x: &[f64]| {
        rows.iter().all(|(a, rel, rhs)| {
            let v: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
            let tol = 1e-7 * (1.0 + rhs.abs());
            match rel {
                Relation::Le => v <= rhs + tol,
                Relation::Ge => v >= rhs - tol,
                Relation::Eq => (v - rhs).abs() <= tol,
            }
        })
    };
    let mut best: Option<f64> = None;
    for subset in combinations(rows.len(), n) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| rows[i].2).collect();
        if let Some(x) = gauss_solve(a, b) {
            if feasible(&x) {
                let v = p.evaluate(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

/// Exact offline optimum with `m` and `x` restricted to multiples of `step`.
///
/// Loads and the fleet are given in grid units. The state after each slot is
/// `(m, X)` with `X` the cumulative executed work; switching is relaxed with
/// a two-pass distance transform and the `0 ≤ x ≤ m` coupling with a window
/// minimum.
pub fn grid_offline(load: &[i64], due: &[i64], fleet: i64, e0: f64, e1: f64, beta: f64, step: f64) -> Option<f64> {
    let h = load.len();
    let total: i64 = load.iter().sum();
    let nm = fleet as usize + 1;
    let nx = total as usize + 1;
    let inf = f64::INFINITY;
    // v[m][x]
    let mut v = vec![vec![inf; nx]; nm];
    v[0][0] = 0.0;
    let (mut cl, mut cd) = (0i64, 0i64);
    for t in 0..h {
        cl += load[t];
        cd += due[t];
        // Switching: w[m][x'] = min_m' v[m'][x'] + β·step·|m − m'|.
        let mut w = v.clone();
        for x in 0..nx {
            for m in 1..nm {
                let c = w[m - 1][x] + beta * step;
                if c < w[m][x] {
                    w[m][x] = c;
                }
            }
            for m in (0..nm - 1).rev() {
                let c = w[m + 1][x] + beta * step;
                if c < w[m][x] {
                    w[m][x] = c;
                }
            }
        }
        let mut next = vec![vec![inf; nx]; nm];
        let (lo_x, hi_x) = (cd.max(0) as usize, cl.min(total) as usize);
        for m in 0..nm {
            // Window minimum of w[m][x'] − e1·step·x' over x' ∈ [x − m, x].
            let f = |prev: usize| w[m][prev] - e1 * step * prev as f64;
            let mut window: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
            for x in 0..=hi_x {
                while window.back().is_some_and(|&b| f(b) >= f(x)) {
                    window.pop_back();
                }
                window.push_back(x);
                while window.front().is_some_and(|&a| a + m < x) {
                    window.pop_front();
                }
                if x >= lo_x {
                    let best = f(window[0]);
                    if best < inf {
                        next[m][x] = best + e1 * step * x as f64 + e0 * step * m as f64;
                    }
                }
            }
        }
        v = next;
    }
    let best = (0..nm).map(|m| v[m][total as usize]).fold(inf, f64::min);
    best.is_finite().then_some(best)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random diurnal-style workload of `horizon` slots with a peak-to-mean
/// ratio drawn from `[1, 5]`.
pub fn random_workload(seed: u64, horizon: usize) -> Vec<f64> {
    let mut r = rng(seed);
    let kind = [SynthKind::Sinusoid, SynthKind::Bursty, SynthKind::Step][r.gen_range(0..3)];
    let mut spec = SynthSpec::new(kind, r.gen_range(1.0..10.0), 1.0 + 4.0 * r.gen::<f64>());
    spec.horizon = horizon;
    spec.period = [48, 96, 144, 288][r.gen_range(0..4)];
    spec.noise = if r.gen_bool(0.5) { r.gen_range(0.0..0.4) } else { 0.0 };
    match synth_workload(&spec, seed, None) {
        Ok(c) => c.values,
        // Shapes that cannot reach the drawn ratio fall back to a smooth cycle.
        Err(_) => {
            spec.kind = SynthKind::Sinusoid;
            synth_workload(&spec, seed, None).unwrap().values
        }
    }
}

pub fn fleet_for(load: &[f64]) -> f64 {
    load.iter().cloned().fold(0.0, f64::max).ceil().max(1.0)
}

pub fn padded(load: &[f64], extra: usize) -> Vec<f64> {
    let mut v = load.to_vec();
    v.resize(load.len() + extra, 0.0);
    v
}
