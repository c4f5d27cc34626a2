//! Cluster validation: silhouettes, confusion matrices and p sweeps.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FdError, Result};
use crate::fdata::FunctionalSample;
use crate::kmeans::{run_kmeans, KMeansConfig, DEFAULT_MAX_ITER};
use crate::metrics::{distance_matrix, MetricSpec};
use crate::spectral::Spectrum;

/// Largest cluster count accepted by [`score`]'s exhaustive matching.
pub const MAX_MATCH_CLUSTERS: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SilhouetteReport {
    /// `s_i` per curve, in input order.
    pub values: Vec<f64>,
    /// Cluster label (1-based) per curve.
    pub labels: Vec<usize>,
    /// Mean silhouette per cluster; index `l-1` holds cluster `l`.
    pub cluster_means: Vec<f64>,
    pub overall_mean: f64,
    /// Curve indices grouped by cluster, nonincreasing silhouette within each.
    pub order: Vec<usize>,
}

/// Silhouette values `s_i = (b_i - a_i) / max(a_i, b_i)` under `metric`.
///
/// Members of singleton clusters get `s_i = 0`. With a single cluster every
/// value is 0 and a warning is logged.
pub fn silhouette(sample: &FunctionalSample, labels: &[usize], metric: &MetricSpec) -> Result<SilhouetteReport> {
    let n = sample.len();
    if labels.len() != n {
        return Err(FdError::dim(format!("{} labels for {n} curves", labels.len())));
    }
    if labels.contains(&0) {
        return Err(FdError::arg("cluster labels are 1-based"));
    }
    let dist = distance_matrix(sample.curves(), metric)?;
    Ok(silhouette_from_distances(&dist, labels))
}

/// Silhouette report from a row-major `n × n` distance matrix.
pub fn silhouette_from_distances(dist: &[f64], labels: &[usize]) -> SilhouetteReport {
    let n = labels.len();
    let k = labels.iter().copied().max().unwrap_or(0);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l - 1] += 1;
    }
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if nonempty < 2 {
        log::warn!("silhouette with a single cluster: all values are 0");
    }

    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i] - 1;
            if nonempty < 2 || sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j] - 1] += dist[i * n + j];
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&l| l != own && sizes[l] > 0)
                .map(|l| sums[l] / sizes[l] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                ((b - a) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();

    let mut cluster_means = vec![0.0; k];
    for (&l, &s) in labels.iter().zip(&values) {
        cluster_means[l - 1] += s;
    }
    for (m, &c) in cluster_means.iter_mut().zip(&sizes) {
        if c > 0 {
            *m /= c as f64;
        }
    }
    let overall_mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        labels[a]
            .cmp(&labels[b])
            .then(values[b].total_cmp(&values[a]))
            .then(a.cmp(&b))
    });
    SilhouetteReport { values, labels: labels.to_vec(), cluster_means, overall_mean, order }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    /// `matrix[f][t]` counts curves in found cluster `found_labels[f]` with truth `truth_labels[t]`.
    pub matrix: Vec<Vec<usize>>,
    pub found_labels: Vec<usize>,
    pub truth_labels: Vec<String>,
    /// Truth column matched to each found row, if any.
    pub matching: Vec<Option<usize>>,
    pub correct: usize,
    pub correct_rate: f64,
}

impl ConfusionReport {
    /// Rows reordered so that row `t` is the found cluster matched to truth
    /// column `t` (zeros if none); unmatched clusters follow in label order.
    pub fn aligned(&self) -> Vec<Vec<usize>> {
        let kt = self.truth_labels.len();
        let mut rows = vec![vec![0usize; kt]; kt];
        let mut extra = Vec::new();
        for (f, m) in self.matching.iter().enumerate() {
            match m {
                Some(t) => rows[*t] = self.matrix[f].clone(),
                None => extra.push(self.matrix[f].clone()),
            }
        }
        rows.extend(extra);
        rows
    }
}

/// Distinct values in order of first appearance.
fn distinct<T: PartialEq + Clone>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(it) {
            out.push(it.clone());
        }
    }
    out
}

/// Visits every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Contingency table of found clusters against truth, scored under the
/// cluster-to-group matching that maximizes agreement.
pub fn score<S: AsRef<str>>(labels: &[usize], truth: &[S]) -> Result<ConfusionReport> {
    if labels.len() != truth.len() {
        return Err(FdError::arg(format!(
            "{} labels vs {} truth labels",
            labels.len(),
            truth.len()
        )));
    }
    let mut found_labels = distinct(labels);
    found_labels.sort_unstable();
    let truth_owned: Vec<String> = truth.iter().map(|s| s.as_ref().to_string()).collect();
    let truth_labels = distinct(&truth_owned);
    let (kf, kt) = (found_labels.len(), truth_labels.len());
    if kf > MAX_MATCH_CLUSTERS || kt > MAX_MATCH_CLUSTERS {
        return Err(FdError::arg(format!(
            "exhaustive matching supports at most {MAX_MATCH_CLUSTERS} clusters, got {kf} found / {kt} true"
        )));
    }
    let mut matrix = vec![vec![0usize; kt]; kf];
    for (l, t) in labels.iter().zip(&truth_owned) {
        let f = found_labels.iter().position(|x| x == l).expect("distinct");
        let c = truth_labels.iter().position(|x| x == t).expect("distinct");
        matrix[f][c] += 1;
    }

    // pad to a square problem; padded rows/columns contribute nothing
    let m = kf.max(kt);
    let mut best = (0usize, vec![None; kf]);
    let mut first = true;
    for_each_permutation(m, |perm| {
        let total: usize = (0..kf).filter(|&f| perm[f] < kt).map(|f| matrix[f][perm[f]]).sum();
        if first || total > best.0 {
            first = false;
            best = (total, (0..kf).map(|f| (perm[f] < kt).then_some(perm[f])).collect());
        }
    });
    let n = labels.len();
    Ok(ConfusionReport {
        matrix,
        found_labels,
        truth_labels,
        matching: best.1,
        correct: best.0,
        correct_rate: if n > 0 { best.0 as f64 / n as f64 } else { 0.0 },
    })
}

/// Replication settings shared by [`sweep_p`] and the experiment driver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub replicates: usize,
    pub n_restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self { replicates: 1, n_restarts: 1, max_iter: DEFAULT_MAX_ITER, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub log10_p: f64,
    pub misclassified_proportion: f64,
    pub sd: f64,
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Misclassification proportion of `d̂_p` k-means for each `log10 p` in
/// `log10_grid`, averaged over `replicates` seeded runs on one sample.
pub fn sweep_p<S: AsRef<str> + Sync>(
    sample: &FunctionalSample,
    truth: &[S],
    k: usize,
    spectrum: Arc<Spectrum>,
    log10_grid: &[f64],
    rep: &ReplicationConfig,
) -> Result<Vec<SweepRow>> {
    if log10_grid.is_empty() {
        return Err(FdError::arg("empty p grid"));
    }
    if rep.replicates == 0 {
        return Err(FdError::arg("replicates must be at least 1"));
    }
    log10_grid
        .par_iter()
        .map(|&lp| {
            let metric = MetricSpec::dp(10f64.powf(lp), spectrum.clone())?;
            let rates = (0..rep.replicates)
                .map(|r| {
                    let cfg = KMeansConfig {
                        k,
                        max_iter: rep.max_iter,
                        n_restarts: rep.n_restarts,
                        seed: crate::experiment::replicate_seed(rep.seed, r),
                        metric: metric.clone(),
                    };
                    let res = run_kmeans(sample, &cfg)?;
                    Ok(1.0 - score(&res.labels, truth)?.correct_rate)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, sd) = mean_sd(&rates);
            Ok(SweepRow { log10_p: lp, misclassified_proportion: mean, sd })
        })
        .collect()
}
