//! Synthetic two-group samples built from a truncated Karhunen-Loève expansion.
//!
//! Each curve is `m_g(t) + Σ_{k≤K̃} Z_k √ρ_k θ_k(t)` on an equispaced grid of
//! `[0, 1]`. Cases `i`/`ii` are univariate with independent standard normal
//! scores. Cases `iii`/`iv` are bivariate: the score pair for each `k` is
//! normal with unit variances and correlation 0.5, and the group mean shift is
//! applied to both components. Cases `i`/`iii` shift the means along
//! `θ_1..θ_3`; cases `ii`/`iv` along `θ_4..θ_K̃`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FdError, Result};
use crate::fdata::{FunctionalSample, Grid, MultiCurve};

/// Correlation between the two score coordinates in the bivariate cases.
pub const SCORE_CORRELATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    I,
    Ii,
    Iii,
    Iv,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::I, Case::Ii, Case::Iii, Case::Iv];

    pub fn components(self) -> usize {
        match self {
            Case::I | Case::Ii => 1,
            Case::Iii | Case::Iv => 2,
        }
    }

    /// Whether the group means differ along the leading three directions
    /// (`true`) or along the tail `θ_4..θ_K̃` (`false`).
    pub fn shifts_leading(self) -> bool {
        matches!(self, Case::I | Case::Iii)
    }
}

impl FromStr for Case {
    type Err = FdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Case::I),
            "ii" | "2" => Ok(Case::Ii),
            "iii" | "3" => Ok(Case::Iii),
            "iv" | "4" => Ok(Case::Iv),
            other => Err(FdError::arg(format!("unknown case '{other}' (expected i, ii, iii or iv)"))),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "i",
            Case::Ii => "ii",
            Case::Iii => "iii",
            Case::Iv => "iv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub case: Case,
    /// Grid size `T`.
    #[serde(rename = "T")]
    pub grid_len: usize,
    /// Number of expansion terms `K̃`.
    #[serde(rename = "K")]
    pub n_terms: usize,
    pub n1: usize,
    pub n2: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(case: Case, seed: u64) -> Self {
        Self { case, grid_len: 150, n_terms: 100, n1: 50, n2: 50, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_len < 2 {
            return Err(FdError::arg("T must be at least 2"));
        }
        if self.n_terms == 0 {
            return Err(FdError::arg("K must be at least 1"));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(FdError::arg("both groups need at least one curve"));
        }
        Ok(())
    }
}

/// Optional overrides read from a scenario JSON file.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    #[serde(rename = "T")]
    pub grid_len: Option<usize>,
    #[serde(rename = "K")]
    pub n_terms: Option<usize>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
}

impl ScenarioOverrides {
    pub fn apply(&self, spec: ScenarioSpec) -> ScenarioSpec {
        ScenarioSpec {
            grid_len: self.grid_len.unwrap_or(spec.grid_len),
            n_terms: self.n_terms.unwrap_or(spec.n_terms),
            n1: self.n1.unwrap_or(spec.n1),
            n2: self.n2.unwrap_or(spec.n2),
            ..spec
        }
    }
}

/// Variance of the `k`-th expansion term: `1/(k+1)` for `k ≤ 3`, `1/(k+1)²` after.
pub fn rho(k: usize) -> Result<f64> {
    match k {
        0 => Err(FdError::arg("rho is indexed from k = 1")),
        1..=3 => Ok(1.0 / (k as f64 + 1.0)),
        _ => Ok(1.0 / ((k as f64 + 1.0) * (k as f64 + 1.0))),
    }
}

/// Fourier basis of `L²([0,1])`: `1`, `√2 sin(kπt)` for even `k`,
/// `√2 cos((k-1)πt)` for odd `k ≥ 3`.
///
/// # Panics
///
/// Panics if `k == 0`.
pub fn theta(k: usize, t: f64) -> f64 {
    use std::f64::consts::{PI, SQRT_2};
    assert!(k >= 1, "theta is indexed from k = 1");
    if k == 1 {
        1.0
    } else if k.is_multiple_of(2) {
        SQRT_2 * (k as f64 * PI * t).sin()
    } else {
        SQRT_2 * ((k as f64 - 1.0) * PI * t).cos()
    }
}

/// Group means `(m_1, m_2)` for a scenario, component-major on the grid.
pub fn group_means(spec: &ScenarioSpec, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    let pts = grid.points();
    let j = spec.case.components();
    let mut m1 = Vec::with_capacity(j * pts.len());
    m1.extend(pts.iter().map(|&t| t * (1.0 - t)));
    if j == 2 {
        m1.extend(pts.iter().map(|&t| 4.0 * t * t * (1.0 - t)));
    }
    let terms: Vec<usize> = if spec.case.shifts_leading() {
        (1..=3.min(spec.n_terms)).collect()
    } else {
        (4..=spec.n_terms).collect()
    };
    let mut shift = vec![0.0; pts.len()];
    for k in terms {
        let s = rho(k)?.sqrt();
        for (v, &t) in shift.iter_mut().zip(pts) {
            *v += s * theta(k, t);
        }
    }
    let m2: Vec<f64> = m1
        .iter()
        .enumerate()
        .map(|(idx, m)| m + shift[idx % pts.len()])
        .collect();
    Ok((m1, m2))
}

/// Draws a labelled sample (`"X"` for group 1, `"Y"` for group 2).
pub fn generate(spec: &ScenarioSpec) -> Result<FunctionalSample> {
    spec.validate()?;
    let grid = Arc::new(Grid::equispaced(0.0, 1.0, spec.grid_len)?);
    let t_len = grid.len();
    let j = spec.case.components();
    let (m1, m2) = group_means(spec, &grid)?;

    // √ρ_k θ_k(t_j), one row per term
    let basis: Vec<Vec<f64>> = (1..=spec.n_terms)
        .map(|k| {
            let s = rho(k).expect("k >= 1").sqrt();
            grid.points().iter().map(|&t| s * theta(k, t)).collect()
        })
        .collect();

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let cross = (1.0 - SCORE_CORRELATION * SCORE_CORRELATION).sqrt();
    let mut curves = Vec::with_capacity(spec.n1 + spec.n2);
    let mut labels = Vec::with_capacity(spec.n1 + spec.n2);
    for (mean, count, label) in [(&m1, spec.n1, "X"), (&m2, spec.n2, "Y")] {
        for _ in 0..count {
            let mut values = mean.clone();
            for row in &basis {
                let z1: f64 = rng.sample(StandardNormal);
                let scores = if j == 1 {
                    [z1, 0.0]
                } else {
                    // lower Cholesky factor of [[1, ρ], [ρ, 1]]
                    let z2: f64 = rng.sample(StandardNormal);
                    [z1, SCORE_CORRELATION * z1 + cross * z2]
                };
                for (l, &z) in scores.iter().take(j).enumerate() {
                    for (v, b) in values[l * t_len..(l + 1) * t_len].iter_mut().zip(row) {
                        *v += z * b;
                    }
                }
            }
            curves.push(MultiCurve::from_flat(grid.clone(), j, values)?);
            labels.push(label.to_string());
        }
    }
    FunctionalSample::new(curves, Some(labels))
}
