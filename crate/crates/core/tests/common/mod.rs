#![allow(dead_code)]

use clmds::{euclidean_distances, DistanceMatrix, FeatureSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `per_blob` points in a Gaussian-ish cloud (uniform box) around each center.
pub fn blobs(centers: &[Vec<f64>], per_blob: usize, spread: f64, seed: u64) -> FeatureSet {
    let mut rng = rng(seed);
    let rows = centers
        .iter()
        .flat_map(|c| {
            (0..per_blob)
                .map(|_| c.iter().map(|&x| x + spread * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>())
                .collect::<Vec<_>>()
        })
        .collect();
    FeatureSet::new(rows).unwrap()
}

pub fn uniform_points(n: usize, dim: usize, seed: u64) -> FeatureSet {
    let mut rng = rng(seed);
    FeatureSet::new((0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()).unwrap()
}

pub fn distances(fs: &FeatureSet) -> DistanceMatrix {
    euclidean_distances(fs)
}

pub fn point_in_hull(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    // poly counter-clockwise, strict interior or boundary
    if poly.len() < 3 {
        return false;
    }
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}
