//! Time-series k-means over flattened sample trajectories, producing
//! deterministic virtual-target trajectories.
//!
//! Each surviving sample trajectory is flattened to one vector of length
//! `n_t * d`; Lloyd iterations with k-means++ seeding (best of several
//! restarts) minimize the within-cluster sum of squared Euclidean
//! distances; the cluster means reshape back into trajectories and are
//! denormalized to world coordinates.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::NormalizationParams;
use crate::predict::SampleTensor;
use crate::types::Trajectory;

/// One flattened sample trajectory: positions concatenated step-major, so
/// entries `[k*d, (k+1)*d)` hold the position at step `k`.
pub type FlattenedTrajectory = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Number of clusters (virtual targets).
    pub n_virtual: usize,
    /// Relative inertia decrease between Lloyd iterations that stops the
    /// algorithm.
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Independent k-means++ initializations; the best final inertia wins.
    pub restarts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { n_virtual: 3, tolerance: 1e-4, max_iter: 300, seed: 0, restarts: 10 }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_virtual == 0 {
            return Err(Error::config("cluster count must be at least 1"));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::config("tolerance must be positive"));
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return Err(Error::config("restarts and max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Result of one k-means run: means, per-point assignments, and the final
/// inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub means: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

/// Cluster-mean trajectories in world coordinates plus clustering
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualTargetSet {
    pub trajectories: Vec<Trajectory>,
    pub member_counts: Vec<usize>,
    pub inertia: f64,
}

/// Flatten all fully valid sample trajectories, target-major then
/// sample-minor, alongside the originating target index of each row.
pub fn flatten(samples: &SampleTensor) -> (Vec<FlattenedTrajectory>, Vec<usize>) {
    let mut flat = Vec::new();
    let mut origin = Vec::new();
    for i in 0..samples.n_targets {
        for j in 0..samples.n_samples {
            if !samples.trajectory_valid(i, j) {
                continue;
            }
            let mut y = Vec::with_capacity(samples.n_steps * samples.dim);
            for k in 0..samples.n_steps {
                y.extend_from_slice(samples.position(i, j, k));
            }
            flat.push(y);
            origin.push(i);
        }
    }
    (flat, origin)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn total_inertia(points: &[FlattenedTrajectory], means: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| squared_distance(p, &means[c]))
        .sum()
}

/// k-means++ seeding: first mean uniform, then points weighted by squared
/// distance to the nearest chosen mean.
fn plus_plus_init(
    points: &[FlattenedTrajectory],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
    means.push(points[rng.gen_range(0..points.len())].clone());
    let mut dist: Vec<f64> = points.iter().map(|p| squared_distance(p, &means[0])).collect();
    while means.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            WeightedIndex::new(&dist).expect("nonnegative weights").sample(rng)
        } else {
            // All remaining points coincide with a mean; pick uniformly.
            rng.gen_range(0..points.len())
        };
        means.push(points[next].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, means.last().unwrap()));
        }
    }
    means
}

fn assign(points: &[FlattenedTrajectory], means: &[Vec<f64>]) -> Vec<usize> {
    points
        .par_iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0usize);
            for (c, m) in means.iter().enumerate() {
                let d = squared_distance(p, m);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect()
}

fn lloyd(
    points: &[FlattenedTrajectory],
    mut means: Vec<Vec<f64>>,
    config: &ClusterConfig,
) -> KmeansResult {
    let width = points[0].len();
    let k = means.len();
    let mut assignment = assign(points, &means);
    let mut inertia = total_inertia(points, &means, &assignment);
    for _ in 0..config.max_iter {
        // Mean update.
        let mut sums = vec![vec![0.0; width]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in &mut sums[c] {
                    *s /= counts[c] as f64;
                }
                means[c] = std::mem::take(&mut sums[c]);
            } else {
                // Re-seed an empty cluster at the point farthest from its
                // assigned mean.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = squared_distance(&points[a], &means[assignment[a]]);
                        let db = squared_distance(&points[b], &means[assignment[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                means[c] = points[far].clone();
            }
        }
        assignment = assign(points, &means);
        let new_inertia = total_inertia(points, &means, &assignment);
        debug_assert!(new_inertia <= inertia + 1e-9, "inertia increased");
        let relative_drop =
            if inertia > 0.0 { (inertia - new_inertia) / inertia } else { 0.0 };
        let converged = relative_drop < config.tolerance;
        inertia = new_inertia;
        if converged {
            break;
        }
    }
    KmeansResult { means, assignments: assignment, inertia }
}

/// Best-of-restarts Lloyd k-means with k-means++ initialization.
pub fn kmeans(points: &[FlattenedTrajectory], config: &ClusterConfig) -> Result<KmeansResult> {
    config.validate()?;
    if points.len() < config.n_virtual {
        return Err(Error::config(format!(
            "{} usable sample trajectories cannot support {} clusters",
            points.len(),
            config.n_virtual
        )));
    }
    let width = points[0].len();
    if points.iter().any(|p| p.len() != width) {
        return Err(Error::contract("flattened trajectories have inconsistent lengths"));
    }
    let mut best: Option<KmeansResult> = None;
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let means = plus_plus_init(points, config.n_virtual, &mut rng);
        let result = lloyd(points, means, config);
        if best.as_ref().map_or(true, |b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Reshape cluster means into per-step positions, denormalize them, and
/// stamp the time grid.
pub fn unflatten_and_renormalize(
    result: &KmeansResult,
    time_grid: &[f64],
    norm: &NormalizationParams,
) -> Result<VirtualTargetSet> {
    let dim = norm.dim;
    let n_t = time_grid.len();
    let mut trajectories = Vec::with_capacity(result.means.len());
    for mean in &result.means {
        if mean.len() != n_t * dim {
            return Err(Error::contract(format!(
                "mean length {} does not match {} steps of dimension {dim}",
                mean.len(),
                n_t
            )));
        }
        let mut positions = Vec::with_capacity(mean.len());
        for k in 0..n_t {
            positions.extend(norm.denormalize_position(&mean[k * dim..(k + 1) * dim]));
        }
        trajectories.push(Trajectory::new(time_grid.to_vec(), positions, dim)?);
    }
    let mut member_counts = vec![0usize; result.means.len()];
    for &a in &result.assignments {
        member_counts[a] += 1;
    }
    Ok(VirtualTargetSet { trajectories, member_counts, inertia: result.inertia })
}

/// Minimum inertia over every partition of the points into `k` non-empty
/// clusters. Exponential; test oracle for small instances only.
pub fn brute_force_inertia(points: &[FlattenedTrajectory], k: usize) -> f64 {
    assert!(k == 2, "oracle implemented for two clusters");
    assert!(points.len() <= 16);
    let n = points.len();
    let width = points[0].len();
    let mut best = f64::INFINITY;
    // Fix point 0 in cluster 0 to halve the enumeration.
    for mask in 0..(1u32 << (n - 1)) {
        let side = |i: usize| -> usize {
            if i == 0 {
                0
            } else {
                ((mask >> (i - 1)) & 1) as usize
            }
        };
        let mut counts = [0usize; 2];
        for i in 0..n {
            counts[side(i)] += 1;
        }
        if counts[0] == 0 || counts[1] == 0 {
            continue;
        }
        let mut means = vec![vec![0.0; width]; 2];
        for i in 0..n {
            for (m, v) in means[side(i)].iter_mut().zip(&points[i]) {
                *m += v;
            }
        }
        for c in 0..2 {
            for m in &mut means[c] {
                *m /= counts[c] as f64;
            }
        }
        let inertia: f64 =
            (0..n).map(|i| squared_distance(&points[i], &means[side(i)])).sum();
        best = best.min(inertia);
    }
    best
}
