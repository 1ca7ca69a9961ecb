//! Shared data model: feature sets, distance matrices, clusterings, hierarchies
//! and embedding results.
//!
//! All types are immutable once validated and can be shared freely across
//! worker threads.

use serde::{Deserialize, Serialize};

use crate::error::{ClmdsError, Result};
use crate::transforms::Transform2D;

/// A point in the embedding plane.
pub type Point2 = [f64; 2];

/// Absolute asymmetry up to which `validate_distance_matrix` repairs by averaging.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-9;
/// Largest diagonal magnitude accepted as zero.
pub const DIAGONAL_TOLERANCE: f64 = 1e-12;

/// `N` descriptor vectors of common dimension `n`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    n_points: usize,
    dim: usize,
    data: Vec<f64>,
    ids: Option<Vec<String>>,
}

impl FeatureSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_points = rows.len();
        if n_points == 0 {
            return Err(ClmdsError::EmptyInput);
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(ClmdsError::Ragged { expected: 1, row: 0, got: 0 });
        }
        let mut data = Vec::with_capacity(n_points * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(ClmdsError::Ragged { expected: dim, row: i, got: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ClmdsError::NonFinite { row: i, col: j });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n_points, dim, data, ids: None })
    }

    /// Attach point labels; the label count must match the point count.
    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_points {
            return Err(ClmdsError::InvalidConfig(format!(
                "{} ids supplied for {} points",
                ids.len(),
                self.n_points
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Rows at `indices`, in that order. Labels follow their rows.
    pub fn subset(&self, indices: &[usize]) -> FeatureSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureSet {
            n_points: indices.len(),
            dim: self.dim,
            data,
            ids: self
                .ids
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect()),
        }
    }

    pub(crate) fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> FeatureSet {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(f(row));
        }
        FeatureSet { n_points: self.n_points, dim: self.dim, data, ids: self.ids.clone() }
    }
}

/// Symmetric, non-negative dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    #[cfg(test)]
    pub(crate) fn from_trusted(n: usize, data: Vec<f64>) -> Self {
        Self { n, data }
    }

    /// Builds a matrix from a pair function evaluated on the upper triangle.
    pub(crate) fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// The principal submatrix on `indices`, in that order.
    pub fn submatrix(&self, indices: &[usize]) -> DistanceMatrix {
        let m = indices.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in indices {
            let row = self.row(i);
            data.extend(indices.iter().map(|&j| row[j]));
        }
        DistanceMatrix { n: m, data }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks_exact(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

/// Validates a raw square matrix as a dissimilarity matrix.
///
/// Asymmetry up to [`ASYMMETRY_TOLERANCE`] is repaired by averaging the two
/// triangles; anything larger is rejected.
pub fn validate_distance_matrix(raw: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let n = raw.len();
    if n == 0 {
        return Err(ClmdsError::EmptyInput);
    }
    for (i, row) in raw.iter().enumerate() {
        if row.len() != n {
            return Err(ClmdsError::NotSquare { rows: n, row: i, cols: row.len() });
        }
    }
    for (i, row) in raw.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(ClmdsError::NonFinite { row: i, col: j });
            }
            if v < 0.0 {
                return Err(ClmdsError::Negative { row: i, col: j, value: v });
            }
        }
        if row[i] > DIAGONAL_TOLERANCE {
            return Err(ClmdsError::NonZeroDiagonal { index: i, value: row[i] });
        }
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (raw[i][j], raw[j][i]);
            let asymmetry = (a - b).abs();
            if asymmetry > ASYMMETRY_TOLERANCE {
                return Err(ClmdsError::Asymmetric { row: i, col: j, asymmetry });
            }
            let v = if a == b { a } else { 0.5 * (a + b) };
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix { n, data })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise Euclidean distances between the rows of `fs`.
pub fn euclidean_distances(fs: &FeatureSet) -> DistanceMatrix {
    DistanceMatrix::from_fn(fs.len(), |i, j| euclidean(fs.row(i), fs.row(j)))
}

/// Hard partition of `N` points into `k` non-empty clusters, each with a medoid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    assignment: Vec<usize>,
    medoids: Vec<usize>,
}

impl Clustering {
    pub fn new(assignment: Vec<usize>, medoids: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        let k = medoids.len();
        if k == 0 {
            return Err(ClmdsError::InvalidClustering("no clusters".into()));
        }
        let mut sizes = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(ClmdsError::InvalidClustering(format!(
                    "point {i} assigned to cluster {c} of {k}"
                )));
            }
            sizes[c] += 1;
        }
        let mut seen = vec![false; n];
        for (c, &m) in medoids.iter().enumerate() {
            if m >= n {
                return Err(ClmdsError::InvalidClustering(format!("medoid {m} out of range")));
            }
            if seen[m] {
                return Err(ClmdsError::InvalidClustering(format!("medoid {m} repeated")));
            }
            seen[m] = true;
            if assignment[m] != c {
                return Err(ClmdsError::InvalidClustering(format!(
                    "medoid {m} of cluster {c} is assigned to cluster {}",
                    assignment[m]
                )));
            }
        }
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(ClmdsError::InvalidClustering(format!("cluster {c} is empty")));
        }
        Ok(Self { assignment, medoids })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.medoids.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn medoids(&self) -> &[usize] {
        &self.medoids
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Member lists per cluster, each in ascending point order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_clusters()];
        for &c in &self.assignment {
            out[c] += 1;
        }
        out
    }
}

/// Strictly decreasing cluster counts, finest first, ending at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct HierarchySpec {
    levels: Vec<usize>,
}

impl HierarchySpec {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(ClmdsError::InvalidHierarchy(format!(
                "{levels:?}: need at least two levels ending in 1"
            )));
        }
        if levels.last() != Some(&1) {
            return Err(ClmdsError::InvalidHierarchy(format!("{levels:?}: must end in 1")));
        }
        if levels.windows(2).any(|w| w[0] <= w[1]) {
            return Err(ClmdsError::InvalidHierarchy(format!(
                "{levels:?}: must be strictly decreasing"
            )));
        }
        Ok(Self { levels })
    }

    /// The two-level hierarchy `[n_clusters, 1]`.
    pub fn flat(n_clusters: usize) -> Result<Self> {
        Self::new(vec![n_clusters, 1])
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn finest(&self) -> usize {
        self.levels[0]
    }
}

impl TryFrom<Vec<usize>> for HierarchySpec {
    type Error = ClmdsError;

    fn try_from(levels: Vec<usize>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<HierarchySpec> for Vec<usize> {
    fn from(h: HierarchySpec) -> Self {
        h.levels
    }
}

/// Artifacts of one clustering level `m`: its clusters, their anchors, and how
/// each cluster was mapped into the frame of its level-`m+1` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub clustering: Clustering,
    /// Level-`m+1` group of each level-`m` cluster.
    pub parent: Vec<usize>,
    /// Anchor point indices per cluster.
    pub anchors: Vec<Vec<usize>>,
    /// Anchor coordinates from the group anchor MDS, matching `anchors`.
    pub anchor_coords: Vec<Vec<Point2>>,
    pub transforms: Vec<Transform2D>,
    pub residues: Vec<f64>,
    /// Final stress of the anchor MDS of each level-`m+1` group.
    pub group_stress: Vec<f64>,
}

/// Output of a cluster-MDS run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClmdsResult {
    pub coords: Vec<Point2>,
    /// Finest-level clustering.
    pub clustering: Clustering,
    pub per_level: Vec<LevelResult>,
    /// Coordinates of each point in its finest cluster's local frame.
    pub local_coords: Vec<Point2>,
    /// Per finest cluster: map from local frame to final coordinates.
    pub cluster_transforms: Vec<Transform2D>,
    /// Final stress of each finest cluster's local MDS.
    pub local_stress: Vec<f64>,
    /// Relative intra-cluster incoherence of the finest clustering.
    pub incoherence: f64,
    /// Points that went through the full pipeline (all points when not sparsified).
    pub sparse_indices: Vec<usize>,
    pub estimated_mask: Vec<bool>,
    /// Finest clusters whose out-of-sample points were placed at the cluster mean.
    pub fallback_clusters: Vec<usize>,
    /// Set when the input was sparsified but had no vectors to estimate from;
    /// rows then cover `sparse_indices` only, in that order.
    pub estimation_unavailable: bool,
}

impl ClmdsResult {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Finest-level anchor flags per row.
    pub fn anchor_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        if let Some(level) = self.per_level.first() {
            for &a in level.anchors.iter().flatten() {
                mask[a] = true;
            }
        }
        mask
    }

    pub fn medoid_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &m in self.clustering.medoids() {
            mask[m] = true;
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_zero_and_two_point_matrices() {
        let d = validate_distance_matrix(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        let d = validate_distance_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(d.get(1, 0), 1.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let err = validate_distance_matrix(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap_err();
        assert!(matches!(err, ClmdsError::Asymmetric { asymmetry, .. } if asymmetry == 1.0));
    }

    #[test]
    fn repairs_small_asymmetry() {
        let d = validate_distance_matrix(&[vec![0.0, 1.0], vec![1.0 + 5e-10, 0.0]]).unwrap();
        assert_eq!(d.get(0, 1), d.get(1, 0));
        assert!((d.get(0, 1) - (1.0 + 2.5e-10)).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(
            validate_distance_matrix(&[vec![0.0, 1.0]]),
            Err(ClmdsError::NotSquare { .. })
        ));
        assert!(matches!(
            validate_distance_matrix(&[vec![0.0, -1.0], vec![-1.0, 0.0]]),
            Err(ClmdsError::Negative { .. })
        ));
        assert!(matches!(
            validate_distance_matrix(&[vec![0.0, f64::NAN], vec![1.0, 0.0]]),
            Err(ClmdsError::NonFinite { .. })
        ));
        assert!(matches!(
            validate_distance_matrix(&[vec![1e-6, 1.0], vec![1.0, 0.0]]),
            Err(ClmdsError::NonZeroDiagonal { .. })
        ));
        assert!(matches!(validate_distance_matrix(&[]), Err(ClmdsError::EmptyInput)));
    }

    #[test]
    fn euclidean_examples() {
        let fs = FeatureSet::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(euclidean_distances(&fs).get(0, 1), 5.0);

        let one = FeatureSet::new(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let d = euclidean_distances(&one);
        assert_eq!((d.len(), d.get(0, 0)), (1, 0.0));

        let square = FeatureSet::new(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let d = euclidean_distances(&square);
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(1, 2), 1.0);
        assert!((d.get(0, 2) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn feature_set_validation() {
        assert!(matches!(FeatureSet::new(vec![]), Err(ClmdsError::EmptyInput)));
        assert!(matches!(
            FeatureSet::new(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(ClmdsError::Ragged { .. })
        ));
        assert!(matches!(
            FeatureSet::new(vec![vec![f64::INFINITY]]),
            Err(ClmdsError::NonFinite { .. })
        ));
    }

    #[test]
    fn clustering_invariants() {
        assert!(Clustering::new(vec![0, 0, 1], vec![0, 2]).is_ok());
        // medoid assigned elsewhere
        assert!(Clustering::new(vec![0, 0, 1], vec![0, 1]).is_err());
        // empty cluster
        assert!(Clustering::new(vec![0, 0, 0], vec![0, 1]).is_err());
        // duplicate medoid
        assert!(Clustering::new(vec![0, 0], vec![0, 0]).is_err());
    }

    #[test]
    fn hierarchy_validation() {
        assert!(HierarchySpec::new(vec![1]).is_err());
        assert!(HierarchySpec::new(vec![5, 5, 1]).is_err());
        assert!(HierarchySpec::new(vec![5, 2]).is_err());
        assert!(HierarchySpec::new(vec![2, 1]).is_ok());
        assert_eq!(HierarchySpec::new(vec![5, 2, 1]).unwrap().finest(), 5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
            (1usize..6).prop_flat_map(|dim| {
                prop::collection::vec(prop::collection::vec(-100.0f64..100.0, dim), 1..12)
            })
        }

        proptest! {
            #[test]
            fn euclidean_output_validates_exactly(rows in points()) {
                let fs = FeatureSet::new(rows).unwrap();
                let d = euclidean_distances(&fs);
                let again = validate_distance_matrix(&d.to_rows()).unwrap();
                prop_assert_eq!(again, d);
            }

            #[test]
            fn euclidean_triangle_inequality(rows in points()) {
                let d = euclidean_distances(&FeatureSet::new(rows).unwrap());
                let n = d.len();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
                        }
                    }
                }
            }
        }
    }
}
