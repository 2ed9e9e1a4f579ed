//! Long-job decomposition and deadline classes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::workload::Job;

/// One slot-sized piece of a job.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobPiece {
    pub parent_id: String,
    /// 1-based position within the parent.
    pub index: usize,
    pub release_slot: usize,
    pub deadline_slots: usize,
    pub load: f64,
}

fn check_length(deadline: usize, length: usize) -> Result<()> {
    if length == 0 {
        return Err(Error::invalid("job length must be at least one slot"));
    }
    if deadline < length {
        return Err(Error::invalid(format!(
            "deadline {deadline} is shorter than job length {length}"
        )));
    }
    Ok(())
}

/// Splits a preemptible job into `length` pieces spaced `⌊D/ℓ⌋` slots apart,
/// each with relative deadline `⌊D/ℓ⌋ − 1`.
pub fn decompose_preemptive(
    parent_id: &str,
    release_slot: usize,
    deadline: usize,
    length: usize,
    unit_load: f64,
) -> Result<Vec<JobPiece>> {
    check_length(deadline, length)?;
    let stride = deadline / length;
    Ok((0..length)
        .map(|i| JobPiece {
            parent_id: parent_id.to_string(),
            index: i + 1,
            release_slot: release_slot + i * stride,
            deadline_slots: stride - 1,
            load: unit_load,
        })
        .collect())
}

/// First piece of a non-preemptible job; the rest are released only once the
/// scheduler has finished the head.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonPreemptiveHead {
    pub head: JobPiece,
    pub length: usize,
}

impl NonPreemptiveHead {
    /// Pieces `2..=ℓ`, released one per slot after `committed_slot` with
    /// deadline 0.
    pub fn continuation_pieces(&self, committed_slot: usize) -> Vec<JobPiece> {
        (2..=self.length)
            .map(|i| JobPiece {
                parent_id: self.head.parent_id.clone(),
                index: i,
                release_slot: committed_slot + i - 1,
                deadline_slots: 0,
                load: self.head.load,
            })
            .collect()
    }
}

pub fn decompose_nonpreemptive(
    parent_id: &str,
    release_slot: usize,
    deadline: usize,
    length: usize,
    unit_load: f64,
) -> Result<NonPreemptiveHead> {
    check_length(deadline, length)?;
    Ok(NonPreemptiveHead {
        head: JobPiece {
            parent_id: parent_id.to_string(),
            index: 1,
            release_slot,
            deadline_slots: deadline - length,
            load: unit_load,
        },
        length,
    })
}

/// How cluster deadlines are drawn from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum DeadlineOrdering {
    /// Most populous cluster gets the smallest deadline.
    #[default]
    Population,
    /// Cluster with the smallest mean feature gets the largest deadline.
    Size,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    pub k: usize,
    /// Centroids in standardized `log(1 + bytes)` space.
    pub centroids: Vec<[f64; 3]>,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    pub deadline_of_cluster: Vec<usize>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_history: Vec<f64>,
}

impl ClusterModel {
    /// Deadline of job `i`, raised to its length when shorter.
    pub fn job_deadline(&self, i: usize, length: Option<usize>) -> usize {
        let d = self.deadline_of_cluster[self.assignment[i]];
        length.map_or(d, |l| d.max(l))
    }

    pub fn assign_deadlines(&self, jobs: &mut [Job]) {
        for (i, job) in jobs.iter_mut().enumerate() {
            job.deadline_slots = Some(self.job_deadline(i, job.length_slots));
        }
    }
}

const MAX_ITERATIONS: usize = 200;

fn features(jobs: &[Job]) -> Vec<[f64; 3]> {
    let raw: Vec<[f64; 3]> = jobs
        .iter()
        .map(|j| j.bytes().map(|b| b.max(0.0).ln_1p()))
        .collect();
    let n = raw.len() as f64;
    let mut out = raw.clone();
    for dim in 0..3 {
        let mean = raw.iter().map(|p| p[dim]).sum::<f64>() / n;
        let var = raw.iter().map(|p| (p[dim] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for p in &mut out {
            p[dim] = if sd > 0.0 { (p[dim] - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means over `(S, S′, S″)` with farthest-point seeding, then deadlines
/// from `deadline_pool` handed out per `ordering`.
pub fn classify_kmeans(
    jobs: &[Job],
    k: usize,
    deadline_pool: &[usize],
    seed: u64,
    ordering: DeadlineOrdering,
) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if deadline_pool.len() != k {
        return Err(Error::invalid(format!(
            "deadline pool has {} values, expected k = {k}",
            deadline_pool.len()
        )));
    }
    let mut pool = deadline_pool.to_vec();
    pool.sort_unstable();
    if pool.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("deadline pool values must be distinct"));
    }
    if jobs.len() < k {
        return Err(Error::invalid(format!(
            "need at least k = {k} jobs, got {}",
            jobs.len()
        )));
    }

    let points = features(jobs);
    let mut distinct: Vec<[f64; 3]> = Vec::new();
    for p in &points {
        if !distinct.iter().any(|q| q == p) {
            distinct.push(*p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    let k_eff = distinct.len().min(k);
    if k_eff < k {
        log::warn!("only {k_eff} distinct jobs, reducing k from {k}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    let mut nearest_d: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k_eff {
        let far = nearest_d
            .iter()
            .enumerate()
            .fold(0, |best, (i, &d)| if d > nearest_d[best] { i } else { best });
        let c = points[far];
        centroids.push(c);
        for (nd, p) in nearest_d.iter_mut().zip(&points) {
            *nd = nd.min(dist2(p, &c));
        }
    }

    let mut assignment = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut objective = 0.0;
        for (a, p) in assignment.iter_mut().zip(&points) {
            let (c, d) = nearest(p, &centroids);
            objective += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        history.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![[0.0; 3]; k_eff];
        let mut counts = vec![0usize; k_eff];
        for (&a, p) in assignment.iter().zip(&points) {
            counts[a] += 1;
            for dim in 0..3 {
                sums[a][dim] += p[dim];
            }
        }
        for c in 0..k_eff {
            // An empty cluster keeps its previous centroid.
            if counts[c] > 0 {
                centroids[c] = sums[c].map(|s| s / counts[c] as f64);
            }
        }
    }

    let mut sizes = vec![0usize; k_eff];
    for &a in &assignment {
        sizes[a] += 1;
    }
    let mut order: Vec<usize> = (0..k_eff).collect();
    match ordering {
        DeadlineOrdering::Population => order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b))),
        DeadlineOrdering::Size => {
            let mean = |c: usize| centroids[c].iter().sum::<f64>();
            order.sort_by(|&a, &b| mean(b).total_cmp(&mean(a)).then(a.cmp(&b)))
        }
    }
    let mut deadline_of_cluster = vec![0; k_eff];
    for (rank, &c) in order.iter().enumerate() {
        deadline_of_cluster[c] = pool[rank];
    }

    Ok(ClusterModel {
        k: k_eff,
        centroids,
        assignment,
        sizes,
        deadline_of_cluster,
        objective_history: history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterRow {
    pub cluster: usize,
    pub jobs: usize,
    pub percent: f64,
    pub median_input_mb: f64,
    pub median_shuffle_mb: f64,
    pub median_output_mb: f64,
    pub deadline: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One row per cluster, ordered by deadline.
pub fn cluster_report(jobs: &[Job], model: &ClusterModel) -> Vec<ClusterRow> {
    let total = jobs.len().max(1) as f64;
    let mut rows: Vec<ClusterRow> = (0..model.k)
        .map(|c| {
            let members: Vec<[f64; 3]> = jobs
                .iter()
                .zip(&model.assignment)
                .filter(|(_, &a)| a == c)
                .map(|(j, _)| j.mb())
                .collect();
            ClusterRow {
                cluster: c,
                jobs: members.len(),
                percent: 100.0 * members.len() as f64 / total,
                median_input_mb: median(members.iter().map(|m| m[0]).collect()),
                median_shuffle_mb: median(members.iter().map(|m| m[1]).collect()),
                median_output_mb: median(members.iter().map(|m| m[2]).collect()),
                deadline: model.deadline_of_cluster[c],
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.deadline, r.cluster));
    rows
}

pub fn write_cluster_csv<W: Write>(rows: &[ClusterRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preemptive_spacing() {
        let p = decompose_preemptive("j", 7, 12, 4, 1.0).unwrap();
        assert_eq!(p.iter().map(|x| x.release_slot).collect::<Vec<_>>(), [7, 10, 13, 16]);
        assert!(p.iter().all(|x| x.deadline_slots == 2));

        let p = decompose_preemptive("j", 3, 5, 1, 1.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].release_slot, p[0].deadline_slots), (3, 4));

        let p = decompose_preemptive("j", 0, 3, 3, 1.0).unwrap();
        assert_eq!(p.iter().map(|x| x.release_slot).collect::<Vec<_>>(), [0, 1, 2]);
        assert!(p.iter().all(|x| x.deadline_slots == 0));
    }

    #[test]
    fn deadline_shorter_than_length_rejected() {
        assert!(decompose_preemptive("j", 0, 2, 3, 1.0).is_err());
        assert!(decompose_nonpreemptive("j", 0, 2, 3, 1.0).is_err());
    }

    #[test]
    fn nonpreemptive_continuations() {
        let h = decompose_nonpreemptive("j", 4, 5, 3, 1.0).unwrap();
        assert_eq!(h.head.deadline_slots, 2);
        let c = h.continuation_pieces(6);
        assert_eq!(c.iter().map(|x| x.release_slot).collect::<Vec<_>>(), [7, 8]);
        assert!(c.iter().all(|x| x.deadline_slots == 0));

        let h = decompose_nonpreemptive("j", 0, 2, 1, 1.0).unwrap();
        assert_eq!(h.head.deadline_slots, 1);
        assert!(h.continuation_pieces(0).is_empty());

        let h = decompose_nonpreemptive("j", 0, 2, 2, 1.0).unwrap();
        assert_eq!(h.head.deadline_slots, 0);
        let c = h.continuation_pieces(3);
        assert_eq!((c[0].release_slot, c[0].deadline_slots), (4, 0));
    }

    fn jobs_of(groups: &[(usize, [f64; 3])]) -> Vec<Job> {
        let mut out = Vec::new();
        for (g, &(n, b)) in groups.iter().enumerate() {
            for i in 0..n {
                let jitter = 1.0 + 0.01 * (i % 7) as f64;
                out.push(Job::new(format!("{g}-{i}"), 0.0, b[0] * jitter, b[1] * jitter, b[2] * jitter));
            }
        }
        out
    }

    #[test]
    fn population_order_gives_smallest_deadline_to_largest_cluster() {
        let jobs = jobs_of(&[(90, [1e4, 0.0, 1e5]), (10, [1e11, 1e10, 1e8])]);
        let m = classify_kmeans(&jobs, 2, &[1, 2], 3, DeadlineOrdering::Population).unwrap();
        let big = m.assignment[0];
        assert_eq!(m.sizes[big], 90);
        assert_eq!(m.deadline_of_cluster[big], 1);
        assert_eq!(m.deadline_of_cluster[m.assignment[95]], 2);
    }

    #[test]
    fn identical_jobs_collapse_to_one_cluster() {
        let mut jobs = jobs_of(&[(5, [100.0, 0.0, 100.0])]);
        for j in &mut jobs {
            *j = Job::new(j.id.clone(), 0.0, 100.0, 0.0, 100.0);
            j.length_slots = Some(3);
        }
        let m = classify_kmeans(&jobs, 3, &[1, 2, 3], 0, DeadlineOrdering::Population).unwrap();
        assert_eq!(m.k, 1);
        m.assign_deadlines(&mut jobs);
        assert!(jobs.iter().all(|j| j.deadline_slots == Some(3)));
        assert_eq!(m.job_deadline(0, None), 1);
    }

    #[test]
    fn objective_never_increases_and_seed_is_deterministic() {
        let jobs = jobs_of(&[
            (40, [1e4, 0.0, 1e5]),
            (20, [1e9, 1e8, 1e6]),
            (10, [1e7, 0.0, 1e10]),
            (5, [1e12, 1e12, 1e3]),
        ]);
        let a = classify_kmeans(&jobs, 4, &[1, 2, 3, 4], 11, DeadlineOrdering::Population).unwrap();
        let b = classify_kmeans(&jobs, 4, &[1, 2, 3, 4], 11, DeadlineOrdering::Population).unwrap();
        assert_eq!(a, b);
        assert!(a.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn bad_pool_rejected() {
        let jobs = jobs_of(&[(5, [1.0, 1.0, 1.0])]);
        assert!(classify_kmeans(&jobs, 2, &[1], 0, DeadlineOrdering::Population).is_err());
        assert!(classify_kmeans(&jobs, 2, &[1, 1], 0, DeadlineOrdering::Population).is_err());
        assert!(classify_kmeans(&jobs[..1], 2, &[1, 2], 0, DeadlineOrdering::Population).is_err());
    }
}
