//! Synthetic datasets and the Voronoi-containment check.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClmdsResult, Clustering, FeatureSet, Point2};
use crate::error::{ClmdsError, Result};
use crate::seed;

/// Points drawn uniformly on the S-shaped surface in 3-D.
pub fn gen_s_curve(n: usize, seed: u64) -> Result<FeatureSet> {
    if n == 0 {
        return Err(ClmdsError::EmptyInput);
    }
    let mut rng = seed::rng(seed);
    let rows = (0..n)
        .map(|_| {
            let t: f64 = rng.random_range(-1.5 * PI..=1.5 * PI);
            let u: f64 = rng.random_range(0.0..=2.0);
            let sign = if t < 0.0 { -1.0 } else { 1.0 };
            vec![t.sin(), u, sign * (t.cos() - 1.0)]
        })
        .collect();
    FeatureSet::new(rows)
}

/// Unit square with `n_holes` circular holes of radius `hole_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolesSpec {
    pub n_points: usize,
    pub n_holes: usize,
    pub hole_radius: f64,
    pub seed: u64,
}

impl Default for HolesSpec {
    fn default() -> Self {
        Self { n_points: 1000, n_holes: 12, hole_radius: 0.08, seed: 0 }
    }
}

const MAX_ATTEMPTS: usize = 100_000;

impl HolesSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 || self.n_holes == 0 {
            return Err(ClmdsError::InvalidConfig("n_points and n_holes must be positive".into()));
        }
        let r = self.hole_radius;
        if !(r > 0.0 && r < 0.5) {
            return Err(ClmdsError::InvalidConfig(format!("hole_radius = {r} must lie in (0, 0.5)")));
        }
        let area = self.n_holes as f64 * PI * r * r;
        if area >= 0.5 {
            return Err(ClmdsError::InvalidConfig(format!("holes cover {area:.3} of the unit square, need < 0.5")));
        }
        Ok(())
    }
}

/// A holes dataset: descriptors are the distances to each hole center.
#[derive(Debug, Clone, PartialEq)]
pub struct HolesDataset {
    pub features: FeatureSet,
    pub positions: Vec<Point2>,
    pub centers: Vec<Point2>,
}

fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Hole centers lie in `[r, 1 - r]^2` and do not overlap; points are uniform
/// outside every hole.
pub fn gen_holes_dataset(spec: &HolesSpec) -> Result<HolesDataset> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let r = spec.hole_radius;

    let mut centers: Vec<Point2> = Vec::with_capacity(spec.n_holes);
    let mut attempts = 0;
    while centers.len() < spec.n_holes {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(ClmdsError::SamplingFailed { attempts, reason: "could not place non-overlapping holes".into() });
        }
        let c = [rng.random_range(r..=1.0 - r), rng.random_range(r..=1.0 - r)];
        if centers.iter().all(|&o| dist(o, c) >= 2.0 * r) {
            centers.push(c);
        }
    }

    let mut positions = Vec::with_capacity(spec.n_points);
    let mut attempts = 0;
    while positions.len() < spec.n_points {
        attempts += 1;
        if attempts > MAX_ATTEMPTS.max(100 * spec.n_points) {
            return Err(ClmdsError::SamplingFailed { attempts, reason: "could not sample points outside the holes".into() });
        }
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        if centers.iter().all(|&c| dist(p, c) >= r) {
            positions.push(p);
        }
    }

    let rows = positions.iter().map(|&p| centers.iter().map(|&c| dist(p, c)).collect()).collect();
    Ok(HolesDataset { features: FeatureSet::new(rows)?, positions, centers })
}

/// Fraction of points whose nearest embedded medoid is their own cluster's.
/// Ties go to the lower cluster index.
pub fn voronoi_containment(result: &ClmdsResult) -> Result<f64> {
    containment(&result.coords, &result.clustering)
}

/// [`voronoi_containment`] on bare coordinates, one per clustered point.
pub fn containment(coords: &[Point2], c: &Clustering) -> Result<f64> {
    if c.n_clusters() < 2 {
        return Err(ClmdsError::InvalidClustering("containment needs at least two clusters".into()));
    }
    if coords.len() != c.len() {
        return Err(ClmdsError::InvalidClustering(format!(
            "{} coordinates for {} clustered points",
            coords.len(),
            c.len()
        )));
    }
    let medoids: Vec<Point2> = c.medoids().iter().map(|&m| coords[m]).collect();
    let hits = coords
        .iter()
        .enumerate()
        .filter(|&(i, &p)| {
            let mut best = (0, f64::INFINITY);
            for (k, &m) in medoids.iter().enumerate() {
                let d = (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0 == c.cluster_of(i)
        })
        .count();
    Ok(hits as f64 / coords.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    #[test]
    fn s_curve_on_surface() {
        let fs = gen_s_curve(500, 3).unwrap();
        assert_eq!((fs.len(), fs.dim()), (500, 3));
        for row in fs.rows() {
            let (x, u, z) = (row[0], row[1], row[2]);
            assert!((0.0..=2.0).contains(&u));
            // z = sign(t)(cos t - 1) and x = sin t put every point on one of
            // the two unit circles centred at (0, -1) or (0, 1)
            let on_curve = (x * x + (z + 1.0).powi(2) - 1.0).abs() < 1e-12 || (x * x + (z - 1.0).powi(2) - 1.0).abs() < 1e-12;
            assert!(on_curve);
        }
        assert_eq!(gen_s_curve(500, 3).unwrap(), fs);
        assert_ne!(gen_s_curve(500, 4).unwrap(), fs);
        assert_eq!(gen_s_curve(0, 0).unwrap_err(), ClmdsError::EmptyInput);
    }

    #[test]
    fn holes_dataset_shape() {
        let data = gen_holes_dataset(&HolesSpec::default()).unwrap();
        assert_eq!((data.features.len(), data.features.dim()), (1000, 12));
        for row in data.features.rows() {
            assert!(row.iter().all(|&v| (0.0..=2f64.sqrt()).contains(&v)));
            assert!(row.iter().cloned().fold(f64::INFINITY, f64::min) >= 0.08);
        }
        for (i, a) in data.centers.iter().enumerate() {
            assert!(a.iter().all(|&v| (0.08..=0.92).contains(&v)));
            for b in &data.centers[i + 1..] {
                assert!(dist(*a, *b) >= 0.16);
            }
        }
        assert_eq!(gen_holes_dataset(&HolesSpec::default()).unwrap(), data);
    }

    #[test]
    fn holes_spec_rejects_large_holes() {
        let spec = HolesSpec { n_holes: 12, hole_radius: 0.2, ..HolesSpec::default() };
        assert!(matches!(gen_holes_dataset(&spec), Err(ClmdsError::InvalidConfig(_))));
        let spec = HolesSpec { n_holes: 0, ..HolesSpec::default() };
        assert!(spec.validate().is_err());
    }

    fn fake_result(coords: Vec<Point2>, c: Clustering) -> ClmdsResult {
        let n = coords.len();
        ClmdsResult {
            coords: coords.clone(),
            clustering: c,
            per_level: Vec::new(),
            local_coords: coords,
            cluster_transforms: Vec::new(),
            local_stress: Vec::new(),
            incoherence: 0.0,
            sparse_indices: (0..n).collect(),
            estimated_mask: vec![false; n],
            fallback_clusters: Vec::new(),
            estimation_unavailable: false,
        }
    }

    #[test]
    fn containment_examples() {
        let coords = vec![[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]];
        let c = Clustering::new(vec![0, 0, 1, 1], vec![0, 2]).unwrap();
        assert_eq!(voronoi_containment(&fake_result(coords.clone(), c)).unwrap(), 1.0);
        let c = Clustering::new(vec![0, 1, 1, 0], vec![0, 2]).unwrap();
        assert_eq!(voronoi_containment(&fake_result(coords.clone(), c)).unwrap(), 0.5);
        let one = Clustering::new(vec![0; 4], vec![0]).unwrap();
        assert!(voronoi_containment(&fake_result(coords, one)).is_err());
    }

    #[test]
    fn shuffled_labels_give_about_half() {
        // two far blobs, labels shuffled at random: about half stay contained
        let mut rng = seed::rng(11);
        let n = 4000;
        let coords: Vec<Point2> =
            (0..n).map(|i| [if i % 2 == 0 { 0.0 } else { 100.0 } + rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        assignment[0] = 0;
        assignment[1] = 1;
        let c = Clustering::new(assignment, vec![0, 1]).unwrap();
        let f = voronoi_containment(&fake_result(coords, c)).unwrap();
        assert!((f - 0.5).abs() < 0.05, "{f}");
    }

    proptest! {
        #[test]
        fn holes_features_are_lipschitz(seed in 0u64..50) {
            let spec = HolesSpec { n_points: 60, n_holes: 5, hole_radius: 0.05, seed };
            let data = gen_holes_dataset(&spec).unwrap();
            let bound = (spec.n_holes as f64).sqrt();
            for i in 0..data.positions.len() {
                for j in i + 1..data.positions.len() {
                    let dv = crate::data::euclidean(data.features.row(i), data.features.row(j));
                    prop_assert!(dv <= bound * dist(data.positions[i], data.positions[j]) + 1e-12);
                }
            }
        }
    }
}
