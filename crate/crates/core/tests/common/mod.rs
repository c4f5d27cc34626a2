//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use mfkmeans::{FunctionalSample, Grid, MultiCurve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix.
/// Returns eigenvalues in nonincreasing order and the matching unit
/// eigenvectors (as rows), covering the whole space.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = idx.iter().map(|&i| a[i][i]).collect();
    let vecs = idx.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (vals, vecs)
}

/// Covariance matrix with divisor n-1, by explicit loops.
pub fn naive_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for x in row {
            *x /= (n - 1) as f64;
        }
    }
    c
}

/// The generalized distance written out with an explicit orthonormal basis of
/// the whole discretized space: the first `min(n-1, d)` eigen-directions
/// carry weight `1/(λ + 1/p)` and every remaining direction weight `p`.
pub fn explicit_dp(rows: &[Vec<f64>], weight: f64, a: &[f64], b: &[f64], p: f64) -> f64 {
    let n = rows.len();
    let d = a.len();
    let (mu, vecs) = jacobi_eigen(naive_covariance(rows));
    let retained = (n - 1).min(d);
    let mut total = 0.0;
    for (k, v) in vecs.iter().enumerate() {
        // operator eigenpair: λ = μΔt, φ = v/√Δt, ⟨x, φ⟩ = Δt Σ x φ = √Δt Σ x v
        let proj: f64 = weight.sqrt() * a.iter().zip(b).zip(v).map(|((x, y), e)| (x - y) * e).sum::<f64>();
        if k < retained {
            let lambda = (mu[k] * weight).max(0.0);
            total += proj * proj / (lambda + 1.0 / p);
        } else {
            total += p * proj * proj;
        }
    }
    total.sqrt()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid(t_min: f64, t_max: f64, len: usize) -> Arc<Grid> {
    Arc::new(Grid::equispaced(t_min, t_max, len).unwrap())
}

pub fn random_curve(rng: &mut impl Rng, g: &Arc<Grid>, j: usize) -> MultiCurve {
    let values = (0..j * g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MultiCurve::from_flat(g.clone(), j, values).unwrap()
}

/// Smooth-ish random curves: a few random sinusoids plus noise.
pub fn random_sample(rng: &mut impl Rng, g: &Arc<Grid>, j: usize, n: usize) -> FunctionalSample {
    let curves = (0..n)
        .map(|_| {
            let amps: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let noise: Vec<f64> = (0..j * g.len()).map(|_| 0.05 * rng.random_range(-1.0..1.0)).collect();
            let pts = g.points();
            let span = pts[pts.len() - 1] - pts[0];
            let values = (0..j * g.len())
                .map(|i| {
                    let (l, ti) = (i / g.len(), i % g.len());
                    let u = (pts[ti] - pts[0]) / span;
                    amps.iter().enumerate().map(|(f, a)| a * ((f + 1 + l) as f64 * u * 3.0).sin()).sum::<f64>() + noise[i]
                })
                .collect();
            MultiCurve::from_flat(g.clone(), j, values).unwrap()
        })
        .collect();
    FunctionalSample::new(curves, None).unwrap()
}

pub fn rows_of(sample: &FunctionalSample) -> Vec<Vec<f64>> {
    sample.curves().iter().map(|c| c.values().to_vec()).collect()
}
