//! Distances between multivariate curves.
//!
//! Three metrics are supported:
//!
//! * the generalized Mahalanobis distance `d_p`, which weights every
//!   principal direction by `h_k(p)/λ_k = 1/(λ_k + 1/p)` and the orthogonal
//!   complement of the estimated eigenspace by `p`;
//! * the truncated Mahalanobis semi-distance over the first `K` directions;
//! * the plain `L²` distance.
//!
//! The complement of the eigenspace is never materialized. Its contribution
//! only depends on the squared norm of the residual
//! `‖a-b‖² - Σ_k ⟨a-b, φ̂_k⟩²`, which is what `d_p` uses.
//!
//! Every metric is the norm of a fixed linear map applied to `a - b`, so each
//! one also exposes a Euclidean feature map ([`MetricSpec::embed`]). The
//! k-means driver works in that feature space.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FdError, Result};
use crate::fdata::{l2_distance, weighted_dot, MultiCurve};
use crate::spectral::Spectrum;

/// `h(λ, p) = λ / (λ + 1/p)`.
pub fn regularizing_weight(lambda: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p <= 0.0 {
        return Err(FdError::arg(format!("p must be positive, got {p}")));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(FdError::arg(format!("eigenvalue must be nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda / (lambda + 1.0 / p))
}

fn check_on_spectrum(curve: &MultiCurve, spectrum: &Spectrum) -> Result<()> {
    if curve.components() != spectrum.components() || **curve.grid() != **spectrum.grid() {
        return Err(FdError::dim("curve does not live on the spectrum's grid"));
    }
    Ok(())
}

/// `d_{M,k} = |⟨diff, φ̂_k⟩| / √λ̂_k`, with `k` counted from 1.
pub fn mahalanobis_component(diff: &MultiCurve, k: usize, spectrum: &Spectrum) -> Result<f64> {
    if k == 0 || k > spectrum.rank() {
        return Err(FdError::Index { index: k, rank: spectrum.rank() });
    }
    check_on_spectrum(diff, spectrum)?;
    let proj = diff.inner(&spectrum.eigenfunctions()[k - 1])?;
    Ok(proj.abs() / spectrum.eigenvalues()[k - 1].sqrt())
}

/// Generalized Mahalanobis distance `d̂_p(a, b)`.
pub fn dp_distance(a: &MultiCurve, b: &MultiCurve, p: f64, spectrum: &Spectrum) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(FdError::arg(format!("p must be positive and finite, got {p}")));
    }
    check_on_spectrum(a, spectrum)?;
    let diff = a.sub(b)?;
    let w = spectrum.grid().weight();
    let norm_sq = weighted_dot(diff.values(), diff.values(), w);
    let inv_p = 1.0 / p;
    let mut weighted = 0.0;
    let mut captured = 0.0;
    for (phi, &lambda) in spectrum.eigenfunctions().iter().zip(spectrum.eigenvalues()) {
        let proj = weighted_dot(diff.values(), phi.values(), w);
        let sq = proj * proj;
        // d²_{M,k} h_k(p) = proj² / (λ + 1/p)
        weighted += sq / (lambda + inv_p);
        captured += sq;
    }
    let residual = (norm_sq - captured).max(0.0);
    Ok((weighted + p * residual).sqrt())
}

/// Truncated Mahalanobis semi-distance over the leading `k` directions.
pub fn truncated_mahalanobis(a: &MultiCurve, b: &MultiCurve, k: usize, spectrum: &Spectrum) -> Result<f64> {
    if k == 0 || k > spectrum.rank() {
        return Err(FdError::arg(format!(
            "truncation K={k} must lie in 1..={}",
            spectrum.rank()
        )));
    }
    check_on_spectrum(a, spectrum)?;
    let diff = a.sub(b)?;
    let w = spectrum.grid().weight();
    let sum: f64 = spectrum
        .eigenfunctions()
        .iter()
        .zip(spectrum.eigenvalues())
        .take(k)
        .map(|(phi, &lambda)| {
            let proj = weighted_dot(diff.values(), phi.values(), w);
            proj * proj / lambda
        })
        .sum();
    Ok(sum.sqrt())
}

/// Which distance to use, before it is bound to a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum MetricChoice {
    /// Generalized Mahalanobis with `p = 10^log10_p`.
    Dp { log10_p: f64 },
    /// Truncated Mahalanobis over `k` leading components.
    Truncated { k: usize },
    L2,
}

impl MetricChoice {
    pub fn needs_spectrum(&self) -> bool {
        !matches!(self, MetricChoice::L2)
    }

    /// Binds the choice to an estimated spectrum.
    pub fn bind(&self, spectrum: Option<Arc<Spectrum>>) -> Result<MetricSpec> {
        match (*self, spectrum) {
            (MetricChoice::L2, _) => Ok(MetricSpec::l2()),
            (MetricChoice::Dp { log10_p }, Some(s)) => MetricSpec::dp(10f64.powf(log10_p), s),
            (MetricChoice::Truncated { k }, Some(s)) => MetricSpec::truncated(k, s),
            (_, None) => Err(FdError::arg(format!("metric {self} needs a spectrum"))),
        }
    }
}

impl fmt::Display for MetricChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricChoice::Dp { log10_p } => write!(f, "dp(log10p={log10_p})"),
            MetricChoice::Truncated { k } => write!(f, "truncated(K={k})"),
            MetricChoice::L2 => write!(f, "l2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    GeneralizedMahalanobis,
    TruncatedMahalanobis,
    L2,
}

/// A fully specified metric, bound to a spectrum where one is required.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    kind: MetricKind,
    p: f64,
    truncation: usize,
    spectrum: Option<Arc<Spectrum>>,
}

impl MetricSpec {
    pub fn dp(p: f64, spectrum: Arc<Spectrum>) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(FdError::arg(format!("p must be positive and finite, got {p}")));
        }
        Ok(Self { kind: MetricKind::GeneralizedMahalanobis, p, truncation: 0, spectrum: Some(spectrum) })
    }

    pub fn truncated(k: usize, spectrum: Arc<Spectrum>) -> Result<Self> {
        if k == 0 || k > spectrum.rank() {
            return Err(FdError::arg(format!(
                "truncation K={k} must lie in 1..={}",
                spectrum.rank()
            )));
        }
        Ok(Self { kind: MetricKind::TruncatedMahalanobis, p: 0.0, truncation: k, spectrum: Some(spectrum) })
    }

    pub fn l2() -> Self {
        Self { kind: MetricKind::L2, p: 0.0, truncation: 0, spectrum: None }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// `p` for the generalized Mahalanobis metric.
    pub fn p(&self) -> Option<f64> {
        (self.kind == MetricKind::GeneralizedMahalanobis).then_some(self.p)
    }

    /// `K` for the truncated metric.
    pub fn truncation(&self) -> Option<usize> {
        (self.kind == MetricKind::TruncatedMahalanobis).then_some(self.truncation)
    }

    pub fn spectrum(&self) -> Option<&Arc<Spectrum>> {
        self.spectrum.as_ref()
    }

    fn spec(&self) -> &Spectrum {
        self.spectrum.as_deref().expect("spectral metric without spectrum")
    }

    /// Distance between two curves under this metric.
    pub fn distance(&self, a: &MultiCurve, b: &MultiCurve) -> Result<f64> {
        match self.kind {
            MetricKind::GeneralizedMahalanobis => dp_distance(a, b, self.p, self.spec()),
            MetricKind::TruncatedMahalanobis => truncated_mahalanobis(a, b, self.truncation, self.spec()),
            MetricKind::L2 => l2_distance(a, b),
        }
    }

    /// Dimension of the feature space produced by [`MetricSpec::embed`].
    pub fn embedding_dim(&self, curve_dim: usize) -> usize {
        match self.kind {
            MetricKind::GeneralizedMahalanobis => self.spec().rank() + curve_dim,
            MetricKind::TruncatedMahalanobis => self.truncation,
            MetricKind::L2 => curve_dim,
        }
    }

    /// Linear feature map `z` with `distance(a, b) = ‖z(a) - z(b)‖₂`.
    ///
    /// `origin` is subtracted before mapping. It does not change distances
    /// but keeps the `√p`-scaled residual block small when `p` is large.
    pub fn embed(&self, curve: &MultiCurve, origin: Option<&MultiCurve>) -> Result<Vec<f64>> {
        let centered;
        let x = match origin {
            Some(o) => {
                centered = curve.sub(o)?;
                &centered
            }
            None => curve,
        };
        if let Some(s) = &self.spectrum {
            check_on_spectrum(x, s)?;
        }
        let w = x.grid().weight();
        let sqrt_w = w.sqrt();
        Ok(match self.kind {
            MetricKind::L2 => x.values().iter().map(|v| v * sqrt_w).collect(),
            MetricKind::TruncatedMahalanobis => {
                let s = self.spec();
                s.eigenfunctions()
                    .iter()
                    .zip(s.eigenvalues())
                    .take(self.truncation)
                    .map(|(phi, &l)| weighted_dot(x.values(), phi.values(), w) / l.sqrt())
                    .collect()
            }
            MetricKind::GeneralizedMahalanobis => {
                let s = self.spec();
                let scores = s.project_values(x.values());
                let mut residual = x.values().to_vec();
                for (phi, &c) in s.eigenfunctions().iter().zip(&scores) {
                    for (r, f) in residual.iter_mut().zip(phi.values()) {
                        *r -= c * f;
                    }
                }
                let inv_p = 1.0 / self.p;
                let res_scale = (self.p * w).sqrt();
                let mut z = Vec::with_capacity(scores.len() + residual.len());
                z.extend(scores.iter().zip(s.eigenvalues()).map(|(c, l)| c / (l + inv_p).sqrt()));
                z.extend(residual.iter().map(|r| r * res_scale));
                z
            }
        })
    }
}

/// Distance between two curves under `spec`.
pub fn distance(a: &MultiCurve, b: &MultiCurve, spec: &MetricSpec) -> Result<f64> {
    spec.distance(a, b)
}

/// Symmetric `n × n` distance matrix in row-major order, computed in parallel.
pub fn distance_matrix(curves: &[MultiCurve], spec: &MetricSpec) -> Result<Vec<f64>> {
    let n = curves.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let origin = crate::fdata::mean_of(curves)?;
    let feats = curves
        .par_iter()
        .map(|c| spec.embed(c, Some(&origin)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j {
                *cell = euclid(&feats[i], &feats[j]);
            }
        }
    });
    // rows are computed independently; force exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            out[j * n + i] = out[i * n + j];
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    sq_euclid(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::Grid;
    use approx::assert_relative_eq;

    fn grid(t: usize) -> Arc<Grid> {
        Arc::new(Grid::equispaced(0.0, 1.0, t).unwrap())
    }

    /// Unit-norm first coordinate direction on a grid of `t` points.
    fn basis_vector(g: &Arc<Grid>, idx: usize) -> MultiCurve {
        let mut v = vec![0.0; g.len()];
        v[idx] = 1.0 / g.weight().sqrt();
        MultiCurve::from_flat(g.clone(), 1, v).unwrap()
    }

    fn single_pair(lambda: f64) -> (Arc<Grid>, Arc<Spectrum>) {
        let g = grid(3);
        let s = Spectrum::from_parts(vec![lambda], vec![basis_vector(&g, 0)]).unwrap();
        (g, Arc::new(s))
    }

    #[test]
    fn weight_examples() {
        assert_eq!(regularizing_weight(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(regularizing_weight(1.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(regularizing_weight(1.0, 1e15).unwrap(), 1.0, epsilon = 1e-12);
        assert!(regularizing_weight(1.0, 0.0).is_err());
        assert!(regularizing_weight(1.0, -2.0).is_err());
        assert!(regularizing_weight(-1.0, 2.0).is_err());
    }

    #[test]
    fn component_examples() {
        let (g, s) = single_pair(4.0);
        let zero = MultiCurve::zeros(g.clone(), 1);
        assert_eq!(mahalanobis_component(&zero, 1, &s).unwrap(), 0.0);
        let phi = s.eigenfunctions()[0].clone();
        assert_relative_eq!(mahalanobis_component(&phi, 1, &s).unwrap(), 0.5, max_relative = 1e-14);
        let orth = basis_vector(&g, 2);
        assert!(mahalanobis_component(&orth, 1, &s).unwrap() < 1e-8);
        assert!(matches!(mahalanobis_component(&phi, 2, &s), Err(FdError::Index { .. })));
        assert!(matches!(mahalanobis_component(&phi, 0, &s), Err(FdError::Index { .. })));
    }

    #[test]
    fn dp_examples() {
        let (g, s) = single_pair(1.0);
        let b = MultiCurve::from_flat(g.clone(), 1, vec![0.3, -1.0, 2.0]).unwrap();
        assert_eq!(dp_distance(&b, &b, 1.0, &s).unwrap(), 0.0);
        let a = b.add(&s.eigenfunctions()[0]).unwrap();
        assert_relative_eq!(dp_distance(&a, &b, 1.0, &s).unwrap(), 0.5f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn dp_without_eigenspace_is_scaled_l2() {
        // rank-0 spectrum: a zero covariance
        let g = grid(3);
        let cov = crate::spectral::CovarianceEstimate::from_matrix(
            g.clone(),
            1,
            nalgebra::DMatrix::zeros(3, 3),
        )
        .unwrap();
        let s = crate::spectral::eigendecompose(&cov).unwrap();
        assert_eq!(s.rank(), 0);
        let a = MultiCurve::from_flat(g.clone(), 1, vec![1.0, 2.0, -0.5]).unwrap();
        let b = MultiCurve::from_flat(g.clone(), 1, vec![0.0, 0.5, 0.5]).unwrap();
        let d = dp_distance(&a, &b, 4.0, &s).unwrap();
        assert_relative_eq!(d, 2.0 * l2_distance(&a, &b).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn truncated_examples() {
        let (g, s) = single_pair(1.0);
        let b = MultiCurve::zeros(g.clone(), 1);
        assert_eq!(truncated_mahalanobis(&b, &b, 1, &s).unwrap(), 0.0);
        let a = s.eigenfunctions()[0].clone();
        assert_relative_eq!(truncated_mahalanobis(&a, &b, 1, &s).unwrap(), 1.0, max_relative = 1e-12);
        let c = basis_vector(&g, 1);
        assert!(truncated_mahalanobis(&c, &b, 1, &s).unwrap() < 1e-12);
        assert!(truncated_mahalanobis(&a, &b, 2, &s).is_err());
        assert!(MetricSpec::truncated(2, s.clone()).is_err());
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let (g, s) = single_pair(1.0);
        let a = s.eigenfunctions()[0].clone();
        let b = MultiCurve::zeros(g, 1);
        assert_eq!(distance(&b, &b, &MetricSpec::l2()).unwrap(), 0.0);
        let dp = MetricSpec::dp(1.0, s.clone()).unwrap();
        assert_relative_eq!(distance(&a, &b, &dp).unwrap(), 0.5f64.sqrt(), max_relative = 1e-12);
        let tr = MetricSpec::truncated(1, s).unwrap();
        assert_relative_eq!(distance(&a, &b, &tr).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn choice_binding() {
        let (_, s) = single_pair(1.0);
        assert!(MetricChoice::Dp { log10_p: 0.0 }.bind(None).is_err());
        let m = MetricChoice::Dp { log10_p: 2.0 }.bind(Some(s.clone())).unwrap();
        assert_relative_eq!(m.p().unwrap(), 100.0, max_relative = 1e-14);
        assert_eq!(MetricChoice::Truncated { k: 1 }.bind(Some(s)).unwrap().truncation(), Some(1));
        assert_eq!(MetricChoice::L2.bind(None).unwrap().kind(), MetricKind::L2);
        let json = serde_json::to_string(&MetricChoice::Truncated { k: 3 }).unwrap();
        assert_eq!(json, r#"{"metric":"truncated","k":3}"#);
    }

    #[test]
    fn rejects_curves_off_the_spectrum_grid() {
        let (_, s) = single_pair(1.0);
        let other = MultiCurve::zeros(grid(4), 1);
        assert!(matches!(dp_distance(&other, &other, 1.0, &s), Err(FdError::Dimension(_))));
    }

    #[test]
    fn distance_matrix_is_symmetric_with_zero_diagonal() {
        let g = grid(5);
        let curves: Vec<_> = (0..4)
            .map(|i| MultiCurve::from_fn(g.clone(), 1, |_, t| (i as f64 + 1.0) * t).unwrap())
            .collect();
        let m = distance_matrix(&curves, &MetricSpec::l2()).unwrap();
        for i in 0..4 {
            assert_eq!(m[i * 4 + i], 0.0);
            for j in 0..4 {
                assert_eq!(m[i * 4 + j], m[j * 4 + i]);
                let direct = l2_distance(&curves[i], &curves[j]).unwrap();
                assert_relative_eq!(m[i * 4 + j], direct, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }
}
