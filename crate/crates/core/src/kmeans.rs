//! Functional k-means under any [`MetricSpec`].
//!
//! The algorithm alternates nearest-centroid assignment with centroid
//! recomputation and stops once two consecutive assignments coincide.
//! Every supported metric is a fixed quadratic form in the difference of two
//! curves, so the centroid minimizing the within-cluster sum of squared
//! distances is the pointwise mean of the members.
//!
//! Cluster labels are 1-based throughout.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{FdError, Result};
use crate::fdata::{mean_of, FunctionalSample, MultiCurve};
use crate::metrics::{sq_euclid, MetricSpec};

pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub metric: MetricSpec,
}

impl KMeansConfig {
    pub fn new(k: usize, metric: MetricSpec, seed: u64) -> Self {
        Self { k, max_iter: DEFAULT_MAX_ITER, n_restarts: 1, seed, metric }
    }

    pub fn with_restarts(mut self, n_restarts: usize) -> Self {
        self.n_restarts = n_restarts;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(FdError::arg("k must be at least 1"));
        }
        if self.k > n {
            return Err(FdError::arg(format!("k={} exceeds the sample size {n}", self.k)));
        }
        if self.max_iter == 0 {
            return Err(FdError::arg("max_iter must be at least 1"));
        }
        if self.n_restarts == 0 {
            return Err(FdError::arg("n_restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    /// Cluster of each curve, in `1..=k`.
    pub labels: Vec<usize>,
    pub centroids: Vec<MultiCurve>,
    /// Sum of squared distances from each curve to its centroid.
    pub objective: f64,
    /// Number of assignment steps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every centroid update of the selected run.
    pub objective_trace: Vec<f64>,
    /// Index of the restart that produced this result.
    pub restart: usize,
}

impl ClusteringResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }
}

/// Nearest-centroid assignment; ties go to the lowest cluster index.
pub fn assign(sample: &FunctionalSample, centroids: &[MultiCurve], metric: &MetricSpec) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(FdError::arg("no centroids"));
    }
    sample
        .curves()
        .par_iter()
        .map(|x| {
            let mut best = (0usize, f64::INFINITY);
            for (l, c) in centroids.iter().enumerate() {
                let d = metric.distance(x, c)?;
                if d < best.1 {
                    best = (l, d);
                }
            }
            Ok(best.0 + 1)
        })
        .collect()
}

fn check_labels(labels: &[usize], n: usize, k: usize) -> Result<()> {
    if labels.len() != n {
        return Err(FdError::dim(format!("{} labels for {n} curves", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > k) {
        return Err(FdError::arg(format!("label {bad} outside 1..={k}")));
    }
    Ok(())
}

/// Pointwise mean of each cluster's members.
pub fn update_centroids(sample: &FunctionalSample, labels: &[usize], k: usize) -> Result<Vec<MultiCurve>> {
    check_labels(labels, sample.len(), k)?;
    (1..=k)
        .map(|l| {
            let members = sample
                .curves()
                .iter()
                .zip(labels)
                .filter(|(_, &c)| c == l)
                .map(|(x, _)| x);
            mean_of(members).map_err(|_| FdError::arg(format!("cluster {l} is empty")))
        })
        .collect()
}

/// `Σ_i distance(X_i, χ_{labels[i]})²`.
pub fn objective(
    sample: &FunctionalSample,
    labels: &[usize],
    centroids: &[MultiCurve],
    metric: &MetricSpec,
) -> Result<f64> {
    check_labels(labels, sample.len(), centroids.len())?;
    sample
        .curves()
        .iter()
        .zip(labels)
        .map(|(x, &l)| metric.distance(x, &centroids[l - 1]).map(|d| d * d))
        .sum()
}

struct Run {
    labels: Vec<usize>,
    objective: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (l, c) in centers.iter().enumerate() {
        let d = sq_euclid(x, c);
        if d < best.1 {
            best = (l, d);
        }
    }
    best
}

fn feature_means(feats: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = feats[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (f, &l) in feats.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(f) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        let inv = 1.0 / c as f64;
        s.iter_mut().for_each(|v| *v *= inv);
    }
    sums
}

/// Moves, for every empty cluster, the curve farthest from its centroid into it.
fn repair_empty(labels: &mut [usize], dists: &mut [f64], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("k <= n guarantees a cluster with two members");
        labels[donor] = empty;
        dists[donor] = 0.0;
    }
}

fn lloyd(feats: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha20Rng) -> Run {
    let n = feats.len();
    let mut centers: Vec<Vec<f64>> = index::sample(rng, n, k).into_iter().map(|i| feats[i].clone()).collect();
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let (mut next, mut dists): (Vec<usize>, Vec<f64>) = feats.iter().map(|x| nearest(x, &centers)).unzip();
        repair_empty(&mut next, &mut dists, k);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        centers = feature_means(feats, &labels, k);
        let obj = feats.iter().zip(&labels).map(|(x, &l)| sq_euclid(x, &centers[l])).sum();
        trace.push(obj);
    }
    let objective = *trace.last().unwrap_or(&0.0);
    Run { labels, objective, iterations, converged, trace }
}

/// Per-task RNG derived from a master seed; each task gets its own stream.
pub fn task_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs k-means with `n_restarts` random initializations and keeps the
/// lowest-objective result. Deterministic for a given seed.
pub fn run_kmeans(sample: &FunctionalSample, config: &KMeansConfig) -> Result<ClusteringResult> {
    let n = sample.len();
    config.validate(n)?;
    let k = config.k;
    let origin = sample.mean(None)?;
    let feats = sample
        .curves()
        .par_iter()
        .map(|c| config.metric.embed(c, Some(&origin)))
        .collect::<Result<Vec<_>>>()?;

    let runs: Vec<Run> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(config.seed, r as u64);
            lloyd(&feats, k, config.max_iter, &mut rng)
        })
        .collect();

    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.objective.total_cmp(&b.objective).then(ia.cmp(ib)))
        .expect("at least one restart");

    let labels: Vec<usize> = best.labels.iter().map(|l| l + 1).collect();
    let centroids = update_centroids(sample, &labels, k)?;
    Ok(ClusteringResult {
        labels,
        centroids,
        objective: best.objective,
        iterations: best.iterations,
        converged: best.converged,
        objective_trace: best.trace,
        restart,
    })
}
