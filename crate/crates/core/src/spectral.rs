//! Pooled covariance estimation and its eigendecomposition.
//!
//! The covariance kernel of a `J`-variate sample is discretized as a
//! `(J·T) × (J·T)` matrix with components stacked block-wise. Its spectrum is
//! rescaled to the operator scale: eigenvalues are multiplied by `Δt` and
//! eigenvectors divided by `√Δt`, so the eigenfunctions are orthonormal under
//! the weighted inner product of [`crate::fdata`].

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{FdError, Result};
use crate::fdata::{weighted_dot, FunctionalSample, Grid, MultiCurve};

/// Eigenvalues at or below `max eigenvalue × RANK_RTOL` are treated as zero.
pub const RANK_RTOL: f64 = 1e-12;

/// Relative asymmetry tolerated by [`eigendecompose`].
pub const SYMMETRY_RTOL: f64 = 1e-10;

/// Discretized estimate of the covariance kernel.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    matrix: DMatrix<f64>,
    grid: Arc<Grid>,
    components: usize,
    n_samples: Option<usize>,
}

impl CovarianceEstimate {
    /// Wraps an explicit stacked covariance matrix.
    pub fn from_matrix(grid: Arc<Grid>, components: usize, matrix: DMatrix<f64>) -> Result<Self> {
        let d = components * grid.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(FdError::dim(format!(
                "covariance must be {d}x{d}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(FdError::Numerical("covariance has non-finite entries".into()));
        }
        Ok(Self { matrix, grid, components, n_samples: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Number of curves the estimate was built from, when known.
    pub fn n_samples(&self) -> Option<usize> {
        self.n_samples
    }

    /// `Δt`-weighted trace, i.e. the trace of the covariance operator.
    pub fn operator_trace(&self) -> f64 {
        self.matrix.trace() * self.grid.weight()
    }
}

/// Unbiased pooled covariance of all curves in the sample.
pub fn estimate_covariance(sample: &FunctionalSample) -> Result<CovarianceEstimate> {
    let n = sample.len();
    if n < 2 {
        return Err(FdError::InsufficientSample { needed: 2, got: n });
    }
    let mean = sample.mean(None)?;
    let d = mean.dim();
    let centered = DMatrix::from_fn(n, d, |i, j| sample.curve(i).values()[j] - mean.values()[j]);
    let mut matrix = centered.transpose() * &centered;
    matrix /= (n - 1) as f64;
    // gemm output is symmetric only up to rounding
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(CovarianceEstimate {
        matrix,
        grid: sample.grid().clone(),
        components: sample.components(),
        n_samples: Some(n),
    })
}

/// Estimated eigenvalues and eigenfunctions of the covariance operator.
///
/// Only the `rank` eigenfunctions with positive eigenvalues are stored; the
/// orthogonal complement is handled implicitly by the metrics.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<MultiCurve>,
    rank: usize,
    grid: Arc<Grid>,
    components: usize,
}

impl Spectrum {
    /// Assembles a spectrum from explicit eigenpairs.
    ///
    /// Eigenvalues must be positive and nonincreasing; eigenfunctions must be
    /// orthonormal within `1e-8`.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenfunctions: Vec<MultiCurve>) -> Result<Self> {
        let first = eigenfunctions
            .first()
            .ok_or_else(|| FdError::arg("spectrum needs at least one eigenpair"))?;
        if eigenvalues.len() != eigenfunctions.len() {
            return Err(FdError::dim("eigenvalue and eigenfunction counts differ"));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(FdError::arg("explicit eigenvalues must be positive and finite"));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(FdError::arg("eigenvalues must be nonincreasing"));
        }
        for f in &eigenfunctions[1..] {
            first.check_compatible(f)?;
        }
        let grid = first.grid().clone();
        let components = first.components();
        let rank = eigenvalues.len();
        let mut all = eigenvalues;
        all.resize(components * grid.len(), 0.0);
        let spectrum = Self { eigenvalues: all, eigenfunctions, rank, grid, components };
        if spectrum.orthonormality_residual() > 1e-8 {
            return Err(FdError::Numerical("eigenfunctions are not orthonormal".into()));
        }
        Ok(spectrum)
    }

    /// All `J·T` eigenvalues, nonincreasing; entries past `rank` are exactly zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The `rank` retained eigenfunctions.
    pub fn eigenfunctions(&self) -> &[MultiCurve] {
        &self.eigenfunctions
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn total_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Scores `⟨curve, φ̂_k⟩` for `k = 1..=rank`.
    pub fn project(&self, curve: &MultiCurve) -> Result<Vec<f64>> {
        if curve.components() != self.components || **curve.grid() != *self.grid {
            return Err(FdError::dim("curve does not match the spectrum's grid"));
        }
        Ok(self.project_values(curve.values()))
    }

    pub(crate) fn project_values(&self, values: &[f64]) -> Vec<f64> {
        let w = self.grid.weight();
        self.eigenfunctions.iter().map(|f| weighted_dot(values, f.values(), w)).collect()
    }

    /// `max_{j,k} |⟨φ̂_j, φ̂_k⟩ - δ_jk|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let w = self.grid.weight();
        let mut worst = 0.0f64;
        for (j, a) in self.eigenfunctions.iter().enumerate() {
            for (k, b) in self.eigenfunctions.iter().enumerate().skip(j) {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((weighted_dot(a.values(), b.values(), w) - target).abs());
            }
        }
        worst
    }
}

/// Solves the discrete eigenproblem of a covariance estimate.
pub fn eigendecompose(cov: &CovarianceEstimate) -> Result<Spectrum> {
    let m = cov.matrix();
    let d = m.nrows();
    let scale = m.amax();
    let asym = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > SYMMETRY_RTOL * scale {
        return Err(FdError::Numerical(format!(
            "covariance is not symmetric (max deviation {asym:e})"
        )));
    }

    let grid = cov.grid().clone();
    let components = cov.components();
    let w = grid.weight();

    if scale == 0.0 {
        return Ok(Spectrum {
            eigenvalues: vec![0.0; d],
            eigenfunctions: Vec::new(),
            rank: 0,
            grid,
            components,
        });
    }

    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let top = eig.eigenvalues[order[0]] * w;
    let threshold = (top * RANK_RTOL).max(0.0);
    let max_rank = cov.n_samples().map_or(d, |n| d.min(n.saturating_sub(1)));

    let inv_sqrt_w = 1.0 / w.sqrt();
    let mut eigenvalues = Vec::with_capacity(d);
    let mut eigenfunctions = Vec::new();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx] * w;
        if lambda > threshold && lambda > 0.0 && eigenfunctions.len() < max_rank {
            let values: Vec<f64> = eig.eigenvectors.column(idx).iter().map(|v| v * inv_sqrt_w).collect();
            eigenfunctions.push(MultiCurve::from_flat(grid.clone(), components, values)?);
            eigenvalues.push(lambda);
        } else {
            eigenvalues.push(0.0);
        }
    }
    let rank = eigenfunctions.len();
    Ok(Spectrum { eigenvalues, eigenfunctions, rank, grid, components })
}

/// Convenience: pooled covariance followed by its eigendecomposition.
pub fn sample_spectrum(sample: &FunctionalSample) -> Result<Spectrum> {
    eigendecompose(&estimate_covariance(sample)?)
}
