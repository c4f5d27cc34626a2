//! k-means clustering of multivariate functional data under a regularized
//! Mahalanobis-type distance built from the sample covariance spectrum.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fdata;
pub mod io;
pub mod kmeans;
pub mod metrics;
pub mod simgen;
pub mod spectral;

pub use error::{FdError, Result};
pub use eval::{score, silhouette, sweep_p, ConfusionReport, ReplicationConfig, SilhouetteReport, SweepRow};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, MetricSummary};
pub use fdata::{inner_product, l2_distance, FunctionalSample, Grid, GridSpec, MultiCurve};
pub use kmeans::{run_kmeans, ClusteringResult, KMeansConfig};
pub use metrics::{distance, distance_matrix, dp_distance, truncated_mahalanobis, MetricChoice, MetricSpec};
pub use simgen::{generate, Case, ScenarioSpec};
pub use spectral::{eigendecompose, estimate_covariance, sample_spectrum, CovarianceEstimate, Spectrum};
