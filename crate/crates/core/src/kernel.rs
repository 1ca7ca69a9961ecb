//! Polynomial descriptor kernels and the dissimilarities they induce.

use serde::{Deserialize, Serialize};

use crate::data::{Clustering, DistanceMatrix, FeatureSet};
use crate::error::{ClmdsError, Result};

/// Tolerance on `|q| = 1` for descriptors that are not renormalised.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;
const KERNEL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub zeta: f64,
    /// Exponent on the medoid kernel in the weighted distance.
    pub eta: u32,
    /// Rescale descriptors to unit norm before use.
    pub normalize: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { zeta: 2.0, eta: 1, normalize: true }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(ClmdsError::InvalidConfig(format!("zeta = {} must be positive", self.zeta)));
        }
        if self.eta == 0 {
            return Err(ClmdsError::InvalidConfig("eta must be >= 1".into()));
        }
        Ok(())
    }
}

/// Symmetric similarity matrix with unit diagonal and entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    /// Validates a raw similarity matrix.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(ClmdsError::EmptyInput);
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ClmdsError::NotSquare { rows: n, row: i, cols: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(-KERNEL_SLACK..=1.0 + KERNEL_SLACK).contains(&v) {
                    return Err(ClmdsError::KernelRange { row: i, col: j, value: v });
                }
                if (v - rows[j][i]).abs() > 1e-12 {
                    return Err(ClmdsError::Asymmetric { row: i, col: j, asymmetry: (v - rows[j][i]).abs() });
                }
            }
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(ClmdsError::KernelRange { row: i, col: i, value: row[i] });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unit-norm descriptors: rescaled when `cfg.normalize`, otherwise checked.
pub fn unit_descriptors(fs: &FeatureSet, cfg: &KernelConfig) -> Result<FeatureSet> {
    for (i, row) in fs.rows().enumerate() {
        let n = norm(row);
        if cfg.normalize && n == 0.0 {
            return Err(ClmdsError::ZeroNorm { index: i });
        }
        if !cfg.normalize && (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(ClmdsError::NotUnitNorm { index: i, norm: n });
        }
    }
    if !cfg.normalize {
        return Ok(fs.clone());
    }
    Ok(fs.map_rows(|row| {
        let n = norm(row);
        row.iter().map(|x| x / n).collect()
    }))
}

/// `(q_i . q_j)^zeta` for unit descriptors; negative products clamp to 0.
#[inline]
pub fn kernel_value(a: &[f64], b: &[f64], zeta: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(0.0, 1.0).powf(zeta)
}

/// Kernel matrix of the descriptors in `fs`.
pub fn kernel_matrix(fs: &FeatureSet, cfg: &KernelConfig) -> Result<KernelMatrix> {
    cfg.validate()?;
    let q = unit_descriptors(fs, cfg)?;
    let n = q.len();
    let mut data = vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let k = kernel_value(q.row(i), q.row(j), cfg.zeta);
            data[i * n + j] = k;
            data[j * n + i] = k;
        }
    }
    Ok(KernelMatrix { n, data })
}

/// Kernel-induced distance `sqrt(1 - K_ij)`.
pub fn kernel_distance(k: f64) -> f64 {
    (1.0 - k).max(0.0).sqrt()
}

/// Distance matrix induced by a unit-diagonal kernel.
pub fn kernel_to_distance(k: &KernelMatrix) -> Result<DistanceMatrix> {
    let n = k.len();
    for i in 0..n {
        for j in 0..n {
            if k.get(i, j) > 1.0 + KERNEL_SLACK {
                return Err(ClmdsError::KernelRange { row: i, col: j, value: k.get(i, j) });
            }
        }
    }
    Ok(DistanceMatrix::from_fn(n, |i, j| kernel_distance(k.get(i, j))))
}

/// Medoid-weighted distance between points in clusters `ci` and `cj`.
#[inline]
fn weighted_entry(k: &KernelMatrix, c: &Clustering, i: usize, j: usize, eta: u32) -> f64 {
    let (ci, cj) = (c.cluster_of(i), c.cluster_of(j));
    let medoid_k = if ci == cj { 1.0 } else { k.get(c.medoids()[ci], c.medoids()[cj]).powi(eta as i32) };
    kernel_distance(k.get(i, j) * medoid_k)
}

/// `sqrt(1 - K_ij (K_{m_k m_s})^eta)` for `i` in cluster `k`, `j` in cluster
/// `s`; pairs inside one cluster keep their plain kernel distance.
pub fn medoid_weighted_distance(k: &KernelMatrix, c: &Clustering, eta: u32) -> Result<DistanceMatrix> {
    if c.len() != k.len() {
        return Err(ClmdsError::InvalidClustering(format!(
            "clustering covers {} points, kernel {}",
            c.len(),
            k.len()
        )));
    }
    if eta == 0 {
        return Err(ClmdsError::InvalidConfig("eta must be >= 1".into()));
    }
    Ok(DistanceMatrix::from_fn(k.len(), |i, j| weighted_entry(k, c, i, j, eta)))
}

/// The weighted distance restricted to `points`, in that order.
pub fn medoid_weighted_submatrix(
    k: &KernelMatrix,
    c: &Clustering,
    eta: u32,
    points: &[usize],
) -> DistanceMatrix {
    DistanceMatrix::from_fn(points.len(), |a, b| weighted_entry(k, c, points[a], points[b], eta))
}
