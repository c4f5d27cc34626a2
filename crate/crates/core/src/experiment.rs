//! Replicated simulation experiments: generate, cluster under each metric,
//! score against the generating groups, aggregate.

use std::io::Write;
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FdError, Result};
use crate::eval::{mean_sd, score, ConfusionReport, SweepRow};
use crate::kmeans::{run_kmeans, task_rng, KMeansConfig, DEFAULT_MAX_ITER};
use crate::metrics::MetricChoice;
use crate::simgen::{generate, ScenarioSpec};
use crate::spectral::sample_spectrum;

/// Seed for task `r` under master seed `seed`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    task_rng(seed, r as u64).next_u64()
}

/// Data and clustering seeds of replicate `r`.
pub fn replicate_seeds(seed: u64, r: usize) -> (u64, u64) {
    (replicate_seed(seed, 2 * r), replicate_seed(seed, 2 * r + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Scenario template; its seed is replaced per replicate.
    pub scenario: ScenarioSpec,
    pub metrics: Vec<MetricChoice>,
    pub replicates: usize,
    pub seed: u64,
    pub k: usize,
    pub n_restarts: usize,
    pub max_iter: usize,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSpec, metrics: Vec<MetricChoice>, replicates: usize, seed: u64) -> Self {
        Self { scenario, metrics, replicates, seed, k: 2, n_restarts: 1, max_iter: DEFAULT_MAX_ITER }
    }

    fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(FdError::arg("no metrics given"));
        }
        if self.replicates == 0 {
            return Err(FdError::arg("replicates must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one metric on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub data_seed: u64,
    pub cluster_seed: u64,
    pub confusion: ConfusionReport,
    pub converged: bool,
    pub iterations: usize,
}

/// Aggregate over replicates for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: MetricChoice,
    pub name: String,
    pub truth_labels: Vec<String>,
    /// Mean aligned confusion matrix; row `t` is the cluster matched to group `t`.
    pub mean_confusion: Vec<Vec<f64>>,
    /// Standard deviation of each diagonal count.
    pub sd_diagonal: Vec<f64>,
    pub mean_correct_rate: f64,
    pub sd_correct_rate: f64,
    pub correct_rates: Vec<f64>,
    pub converged_fraction: f64,
}

impl MetricSummary {
    pub fn max_sd_diagonal(&self) -> f64 {
        self.sd_diagonal.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<MetricSummary>,
    pub outcomes: Vec<Vec<ReplicateOutcome>>,
}

impl ExperimentReport {
    pub fn summary(&self, metric: &MetricChoice) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| &s.metric == metric)
    }
}

fn run_replicate(cfg: &ExperimentConfig, r: usize) -> Result<Vec<ReplicateOutcome>> {
    let (data_seed, cluster_seed) = replicate_seeds(cfg.seed, r);
    let sample = generate(&cfg.scenario.with_seed(data_seed))?;
    let truth = sample.labels().expect("generated samples carry labels").to_vec();
    let spectrum = if cfg.metrics.iter().any(MetricChoice::needs_spectrum) {
        Some(Arc::new(sample_spectrum(&sample)?))
    } else {
        None
    };
    cfg.metrics
        .iter()
        .map(|m| {
            let kc = KMeansConfig {
                k: cfg.k,
                max_iter: cfg.max_iter,
                n_restarts: cfg.n_restarts,
                seed: cluster_seed,
                metric: m.bind(spectrum.clone())?,
            };
            let res = run_kmeans(&sample, &kc)?;
            Ok(ReplicateOutcome {
                replicate: r,
                data_seed,
                cluster_seed,
                confusion: score(&res.labels, &truth)?,
                converged: res.converged,
                iterations: res.iterations,
            })
        })
        .collect()
}

fn summarize(metric: MetricChoice, outcomes: &[ReplicateOutcome]) -> MetricSummary {
    let m = outcomes.len();
    let aligned: Vec<Vec<Vec<usize>>> = outcomes.iter().map(|o| o.confusion.aligned()).collect();
    let cols = outcomes[0].confusion.truth_labels.len();
    let rows = aligned.iter().map(Vec::len).max().unwrap_or(0);
    let mut mean_confusion = vec![vec![0.0; cols]; rows];
    for a in &aligned {
        for (i, row) in a.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                mean_confusion[i][j] += c as f64;
            }
        }
    }
    for row in &mut mean_confusion {
        for v in row {
            *v /= m as f64;
        }
    }
    let sd_diagonal = (0..cols)
        .map(|t| {
            let xs: Vec<f64> = aligned.iter().map(|a| a[t][t] as f64).collect();
            mean_sd(&xs).1
        })
        .collect();
    let correct_rates: Vec<f64> = outcomes.iter().map(|o| o.confusion.correct_rate).collect();
    let (mean_correct_rate, sd_correct_rate) = mean_sd(&correct_rates);
    MetricSummary {
        metric,
        name: metric.to_string(),
        truth_labels: outcomes[0].confusion.truth_labels.clone(),
        mean_confusion,
        sd_diagonal,
        mean_correct_rate,
        sd_correct_rate,
        correct_rates,
        converged_fraction: outcomes.iter().filter(|o| o.converged).count() as f64 / m as f64,
    }
}

/// Runs every replicate (in parallel) and aggregates in replicate order, so
/// the report does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_rep: Vec<Vec<ReplicateOutcome>> =
        (0..cfg.replicates).into_par_iter().map(|r| run_replicate(cfg, r)).collect::<Result<_>>()?;
    let outcomes: Vec<Vec<ReplicateOutcome>> = (0..cfg.metrics.len())
        .map(|mi| per_rep.iter().map(|rep| rep[mi].clone()).collect())
        .collect();
    let summaries = cfg.metrics.iter().zip(&outcomes).map(|(m, o)| summarize(*m, o)).collect();
    Ok(ExperimentReport { config: cfg.clone(), summaries, outcomes })
}

/// Misclassification over a `log10 p` grid with fresh data per replicate.
pub fn scenario_sweep(
    scenario: ScenarioSpec,
    log10_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if log10_grid.is_empty() {
        return Err(FdError::arg("empty p grid"));
    }
    let metrics = log10_grid.iter().map(|&log10_p| MetricChoice::Dp { log10_p }).collect();
    let report = run_experiment(&ExperimentConfig::new(scenario, metrics, replicates, seed))?;
    Ok(log10_grid
        .iter()
        .zip(&report.summaries)
        .map(|(&lp, s)| {
            let mis: Vec<f64> = s.correct_rates.iter().map(|c| 1.0 - c).collect();
            let (mean, sd) = mean_sd(&mis);
            SweepRow { log10_p: lp, misclassified_proportion: mean, sd }
        })
        .collect())
}

/// Per-metric table: `metric,row,col,mean_count` plus diagonal sd and rates.
pub fn write_summary_csv<W: Write>(writer: W, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| FdError::Io(std::io::Error::other(e.to_string()));
    w.write_record(["metric", "cluster", "group", "mean_count", "sd_count", "mean_correct_rate", "sd_correct_rate"])
        .map_err(io)?;
    for s in &report.summaries {
        for (i, row) in s.mean_confusion.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let sd = if i == j { s.sd_diagonal[j].to_string() } else { String::new() };
                w.write_record([
                    s.name.clone(),
                    (i + 1).to_string(),
                    s.truth_labels[j].clone(),
                    v.to_string(),
                    sd,
                    s.mean_correct_rate.to_string(),
                    s.sd_correct_rate.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::Case;

    fn small(case: Case) -> ScenarioSpec {
        ScenarioSpec { grid_len: 30, n_terms: 20, n1: 12, n2: 12, ..ScenarioSpec::new(case, 0) }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a: Vec<_> = (0..50).map(|r| replicate_seeds(9, r)).collect();
        let b: Vec<_> = (0..50).map(|r| replicate_seeds(9, r)).collect();
        assert_eq!(a, b);
        let mut all: Vec<u64> = a.iter().flat_map(|(x, y)| [*x, *y]).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn single_replicate_matches_direct_run() {
        let metric = MetricChoice::Dp { log10_p: 2.0 };
        let cfg = ExperimentConfig::new(small(Case::Ii), vec![metric], 1, 4);
        let rep = run_experiment(&cfg).unwrap();

        let (ds, cs) = replicate_seeds(4, 0);
        let sample = generate(&cfg.scenario.with_seed(ds)).unwrap();
        let spec = Arc::new(sample_spectrum(&sample).unwrap());
        let kc = KMeansConfig::new(2, metric.bind(Some(spec)).unwrap(), cs);
        let res = run_kmeans(&sample, &kc).unwrap();
        let direct = score(&res.labels, sample.labels().unwrap()).unwrap();
        assert_eq!(rep.outcomes[0][0].confusion, direct);
        let s = &rep.summaries[0];
        assert_eq!(s.mean_correct_rate, direct.correct_rate);
        assert_eq!(s.sd_diagonal, vec![0.0, 0.0]);
    }

    #[test]
    fn reruns_are_identical() {
        let cfg = ExperimentConfig::new(
            small(Case::Iii),
            vec![MetricChoice::L2, MetricChoice::Dp { log10_p: -2.0 }, MetricChoice::Truncated { k: 3 }],
            6,
            11,
        );
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_summary_csv(&mut x, &a).unwrap();
        write_summary_csv(&mut y, &b).unwrap();
        assert_eq!(x, y);
        for s in &a.summaries {
            let total: f64 = s.mean_confusion.iter().flatten().sum();
            assert!((total - 24.0).abs() < 1e-12);
            assert!((0.5..=1.0).contains(&s.mean_correct_rate));
        }
    }

    #[test]
    fn sweep_rows_follow_grid() {
        let rows = scenario_sweep(small(Case::I), &[-2.0, 4.0], 3, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].log10_p, 4.0);
        assert!(rows.iter().all(|r| (0.0..=0.5).contains(&r.misclassified_proportion)));
        assert!(scenario_sweep(small(Case::I), &[], 3, 1).is_err());
    }
}
