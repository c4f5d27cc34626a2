//! Discretized multivariate functional data.
//!
//! A [`MultiCurve`] holds `J` component functions sampled on a shared
//! equispaced [`Grid`] of `T` points. Integrals over the domain use the
//! rectangle rule with the uniform grid weight, so the inner product of
//! `(L²(I))^J` becomes a weighted dot product over the stacked values.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FdError, Result};

/// Relative tolerance used when checking that abscissae are equispaced.
const EQUISPACED_RTOL: f64 = 1e-9;

/// Equispaced evaluation grid with its quadrature weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weight: f64,
}

/// Compact grid description used in grid JSON files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    #[serde(rename = "T")]
    pub len: usize,
}

impl Grid {
    /// `len` equispaced points from `t_min` to `t_max` inclusive.
    pub fn equispaced(t_min: f64, t_max: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(FdError::Validation(format!("grid needs T >= 2 points, got {len}")));
        }
        if !(t_min.is_finite() && t_max.is_finite()) || t_max <= t_min {
            return Err(FdError::Validation(format!(
                "grid bounds must be finite with t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        let step = (t_max - t_min) / (len - 1) as f64;
        let points = (0..len)
            .map(|j| if j + 1 == len { t_max } else { t_min + j as f64 * step })
            .collect();
        Ok(Self { points, weight: step })
    }

    /// Builds a grid from explicit abscissae, rejecting anything that is not
    /// strictly increasing and equispaced.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(FdError::Validation(format!(
                "grid needs T >= 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(FdError::Validation("grid points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FdError::Validation("grid points must be strictly increasing".into()));
        }
        let len = points.len();
        let span = points[len - 1] - points[0];
        let step = span / (len - 1) as f64;
        for w in points.windows(2) {
            if ((w[1] - w[0]) - step).abs() > EQUISPACED_RTOL * span.max(f64::MIN_POSITIVE) {
                return Err(FdError::Validation(
                    "non-equispaced grids are not supported".into(),
                ));
            }
        }
        Ok(Self { points, weight: step })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        Self::equispaced(spec.t_min, spec.t_max, spec.len)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            t_min: self.points[0],
            t_max: self.points[self.points.len() - 1],
            len: self.points.len(),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of grid points `T`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature weight `Δt = (t_T - t_1) / (T - 1)`.
    pub fn weight(&self) -> f64 {
        self.weight
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// One statistical unit: `J` component functions on a shared grid.
///
/// Values are stored component-major, so component `l` occupies
/// `values[l*T..(l+1)*T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCurve {
    grid: Arc<Grid>,
    components: usize,
    values: Vec<f64>,
}

impl MultiCurve {
    /// Builds a curve from one row of values per component.
    pub fn new(grid: Arc<Grid>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = grid.len();
        if rows.is_empty() {
            return Err(FdError::Validation("a curve needs at least one component".into()));
        }
        let components = rows.len();
        let mut values = Vec::with_capacity(components * t);
        for (l, row) in rows.into_iter().enumerate() {
            if row.len() != t {
                return Err(FdError::dim(format!(
                    "component {} has {} values, grid has {t}",
                    l + 1,
                    row.len()
                )));
            }
            values.extend(row);
        }
        Self::from_flat(grid, components, values)
    }

    /// Builds a curve from stacked component-major values.
    pub fn from_flat(grid: Arc<Grid>, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(FdError::Validation("a curve needs at least one component".into()));
        }
        if values.len() != components * grid.len() {
            return Err(FdError::dim(format!(
                "expected {} values for J={components}, T={}, got {}",
                components * grid.len(),
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FdError::Validation("curve values must be finite".into()));
        }
        Ok(Self { grid, components, values })
    }

    /// Evaluates `f(component, t)` on every grid point.
    pub fn from_fn(grid: Arc<Grid>, components: usize, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let values = (0..components)
            .flat_map(|l| grid.points().iter().map(move |&t| (l, t)).collect::<Vec<_>>())
            .map(|(l, t)| f(l, t))
            .collect();
        Self::from_flat(grid, components, values)
    }

    pub fn zeros(grid: Arc<Grid>, components: usize) -> Self {
        let values = vec![0.0; components * grid.len()];
        Self { grid, components, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Number of components `J`.
    pub fn components(&self) -> usize {
        self.components
    }

    /// Stacked dimension `J·T`.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, l: usize) -> &[f64] {
        let t = self.grid.len();
        &self.values[l * t..(l + 1) * t]
    }

    pub(crate) fn check_compatible(&self, other: &MultiCurve) -> Result<()> {
        if self.components != other.components {
            return Err(FdError::dim(format!(
                "component count {} vs {}",
                self.components, other.components
            )));
        }
        if !same_grid(&self.grid, &other.grid) {
            return Err(FdError::dim("curves live on different grids"));
        }
        Ok(())
    }

    fn zip_with(&self, other: &MultiCurve, f: impl Fn(f64, f64) -> f64) -> Result<MultiCurve> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(MultiCurve { grid: self.grid.clone(), components: self.components, values })
    }

    pub fn sub(&self, other: &MultiCurve) -> Result<MultiCurve> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &MultiCurve) -> Result<MultiCurve> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> MultiCurve {
        MultiCurve {
            grid: self.grid.clone(),
            components: self.components,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// `⟨self, other⟩` in `(L²(I))^J`.
    pub fn inner(&self, other: &MultiCurve) -> Result<f64> {
        inner_product(self, other)
    }

    /// `‖self‖` in `(L²(I))^J`.
    pub fn norm(&self) -> f64 {
        (weighted_dot(&self.values, &self.values, self.grid.weight())).sqrt()
    }
}

#[inline]
pub(crate) fn weighted_dot(a: &[f64], b: &[f64], weight: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * weight
}

/// Rectangle-rule inner product `Σ_l Σ_j a_l(t_j) b_l(t_j) Δt`.
pub fn inner_product(a: &MultiCurve, b: &MultiCurve) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(weighted_dot(&a.values, &b.values, a.grid.weight()))
}

/// `‖a - b‖`, the `L²` distance between two curves.
pub fn l2_distance(a: &MultiCurve, b: &MultiCurve) -> Result<f64> {
    a.check_compatible(b)?;
    let sq: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq * a.grid.weight()).sqrt())
}

/// Pointwise mean of a non-empty set of compatible curves.
pub fn mean_of<'a>(curves: impl IntoIterator<Item = &'a MultiCurve>) -> Result<MultiCurve> {
    let mut iter = curves.into_iter();
    let first = iter.next().ok_or_else(|| FdError::arg("mean of an empty set of curves"))?;
    // running update keeps the mean of identical curves exact
    let mut acc = first.values.clone();
    let mut count = 1usize;
    for c in iter {
        first.check_compatible(c)?;
        count += 1;
        let inv = 1.0 / count as f64;
        for (a, v) in acc.iter_mut().zip(&c.values) {
            *a += (v - *a) * inv;
        }
    }
    Ok(MultiCurve { grid: first.grid.clone(), components: first.components, values: acc })
}

/// `n` curves on one grid with one component count, plus optional group labels.
#[derive(Debug, Clone)]
pub struct FunctionalSample {
    grid: Arc<Grid>,
    components: usize,
    curves: Vec<MultiCurve>,
    labels: Option<Vec<String>>,
    ids: Vec<String>,
}

impl FunctionalSample {
    pub fn new(curves: Vec<MultiCurve>, labels: Option<Vec<String>>) -> Result<Self> {
        if curves.len() < 2 {
            return Err(FdError::InsufficientSample { needed: 2, got: curves.len() });
        }
        let first = &curves[0];
        for c in &curves[1..] {
            first.check_compatible(c)?;
        }
        if let Some(l) = &labels {
            if l.len() != curves.len() {
                return Err(FdError::dim(format!(
                    "{} labels for {} curves",
                    l.len(),
                    curves.len()
                )));
            }
        }
        let ids = (1..=curves.len()).map(|i| i.to_string()).collect();
        Ok(Self {
            grid: first.grid.clone(),
            components: first.components,
            curves,
            labels,
            ids,
        })
    }

    /// Replaces the default curve identifiers (`"1"..="n"`).
    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.curves.len() {
            return Err(FdError::dim(format!("{} ids for {} curves", ids.len(), self.curves.len())));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curves(&self) -> &[MultiCurve] {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> &MultiCurve {
        &self.curves[i]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.curves.len() {
            return Err(FdError::dim(format!(
                "{} labels for {} curves",
                labels.len(),
                self.curves.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Pointwise mean over all curves, or over `subset` when given.
    pub fn mean(&self, subset: Option<&[usize]>) -> Result<MultiCurve> {
        match subset {
            None => mean_of(&self.curves),
            Some(idx) => {
                if idx.is_empty() {
                    return Err(FdError::arg("empty subset"));
                }
                if let Some(&bad) = idx.iter().find(|&&i| i >= self.curves.len()) {
                    return Err(FdError::Index { index: bad, rank: self.curves.len() });
                }
                mean_of(idx.iter().map(|&i| &self.curves[i]))
            }
        }
    }
}
