//! Weighted metric MDS in two dimensions by stress majorization (SMACOF).

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DistanceMatrix, Point2};
use crate::error::{ClmdsError, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdsConfig {
    /// Random restarts; the lowest-stress run wins.
    pub n_init: usize,
    pub max_iter: usize,
    /// Stop once an iteration lowers the stress by less than `eps` relative.
    pub eps: f64,
    pub seed: u64,
}

impl Default for MdsConfig {
    fn default() -> Self {
        Self { n_init: 4, max_iter: 300, eps: 1e-6, seed: 0 }
    }
}

impl MdsConfig {
    fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.max_iter == 0 {
            return Err(ClmdsError::InvalidConfig("n_init and max_iter must be positive".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(ClmdsError::InvalidConfig(format!("eps = {} outside (0, 1)", self.eps)));
        }
        Ok(())
    }
}

/// Pair weights for the stress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    /// The same weight for every pair.
    Uniform(f64),
    /// `weights[labels[i]]` for pairs inside one cluster, `cross` otherwise.
    PerCluster { labels: Vec<usize>, weights: Vec<f64>, cross: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Uniform(1.0)
    }
}

impl WeightSpec {
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self {
            WeightSpec::Uniform(w) => *w,
            WeightSpec::PerCluster { labels, weights, cross } => {
                if labels[i] == labels[j] {
                    weights[labels[i]]
                } else {
                    *cross
                }
            }
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let bad = |w: f64| !(w.is_finite() && w >= 0.0);
        match self {
            WeightSpec::Uniform(w) if bad(*w) => {
                Err(ClmdsError::InvalidConfig(format!("weight {w} must be finite and >= 0")))
            }
            WeightSpec::PerCluster { labels, weights, cross } => {
                if labels.len() != n {
                    return Err(ClmdsError::InvalidConfig(format!(
                        "{} weight labels for {n} points",
                        labels.len()
                    )));
                }
                if labels.iter().any(|&l| l >= weights.len()) {
                    return Err(ClmdsError::InvalidConfig("weight label out of range".into()));
                }
                if bad(*cross) || weights.iter().any(|&w| bad(w)) {
                    return Err(ClmdsError::InvalidConfig("weights must be finite and >= 0".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// The common weight when every pair among `n` points has the same one.
    fn uniform_value(&self, n: usize) -> Option<f64> {
        match self {
            WeightSpec::Uniform(w) => Some(*w),
            WeightSpec::PerCluster { .. } => {
                let w0 = self.weight(0, 1.min(n - 1));
                (0..n)
                    .all(|i| (i + 1..n).all(|j| self.weight(i, j) == w0))
                    .then_some(w0)
            }
        }
    }

    /// Whether the positive-weight pairs connect all `n` points.
    fn connects(&self, n: usize) -> bool {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut components = n;
        for i in 0..n {
            for j in i + 1..n {
                if self.weight(i, j) > 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                        components -= 1;
                    }
                }
            }
        }
        components <= 1
    }
}

fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Weighted raw stress `sum_{i<j} w_ij (D_ij - d_ij)^2`.
pub fn stress(d: &DistanceMatrix, coords: &[Point2], w: &WeightSpec) -> f64 {
    assert_eq!(d.len(), coords.len(), "coordinate rows must match the distance matrix");
    let n = coords.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let wij = w.weight(i, j);
            if wij > 0.0 {
                let r = d.get(i, j) - dist(coords[i], coords[j]);
                s += wij * r * r;
            }
        }
    }
    s
}

/// Weighted sum of squared input dissimilarities, the stress normaliser.
pub fn weighted_dissimilarity_norm(d: &DistanceMatrix, w: &WeightSpec) -> f64 {
    let n = d.len();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| w.weight(i, j) * d.get(i, j).powi(2))
        .sum()
}

/// One majorization run from a fixed start.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsRun {
    pub coords: Vec<Point2>,
    pub stress: f64,
    /// Stress of the start followed by the stress after each iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsResult {
    /// Centered at the origin.
    pub coords: Vec<Point2>,
    pub stress: f64,
    pub n_iter: usize,
}

enum Update {
    Uniform { n: f64 },
    General { v_pinv: DMatrix<f64> },
}

impl Update {
    fn new(w: &WeightSpec, n: usize) -> Result<Self> {
        if let Some(u) = w.uniform_value(n) {
            if u <= 0.0 {
                return Err(ClmdsError::DegenerateWeights);
            }
            return Ok(Update::Uniform { n: n as f64 });
        }
        if !w.connects(n) {
            return Err(ClmdsError::DegenerateWeights);
        }
        // V^+ = (V + 11'/n)^-1 - 11'/n for a connected weight graph
        let inv_n = 1.0 / n as f64;
        let mut v = DMatrix::from_element(n, n, inv_n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let wij = w.weight(i, j);
                    v[(i, j)] -= wij;
                    v[(i, i)] += wij;
                }
            }
        }
        let mut v_pinv = v.cholesky().ok_or(ClmdsError::DegenerateWeights)?.inverse();
        v_pinv.add_scalar_mut(-inv_n);
        Ok(Update::General { v_pinv })
    }
}

/// Guttman transform `X <- V^+ B(X) X`.
fn guttman(d: &DistanceMatrix, w: &WeightSpec, update: &Update, x: &[Point2]) -> Vec<Point2> {
    let n = x.len();
    let uniform = matches!(update, Update::Uniform { .. });
    let mut bx = vec![[0.0; 2]; n];
    for i in 0..n {
        let mut acc = [0.0; 2];
        for j in 0..n {
            if i == j {
                continue;
            }
            let dij = dist(x[i], x[j]);
            if dij <= 0.0 {
                continue;
            }
            let wij = if uniform { 1.0 } else { w.weight(i, j) };
            let b = wij * d.get(i, j) / dij;
            acc[0] += b * (x[i][0] - x[j][0]);
            acc[1] += b * (x[i][1] - x[j][1]);
        }
        bx[i] = acc;
    }
    match update {
        Update::Uniform { n } => bx.iter().map(|p| [p[0] / n, p[1] / n]).collect(),
        Update::General { v_pinv } => (0..n)
            .map(|i| {
                let mut out = [0.0; 2];
                for (j, p) in bx.iter().enumerate() {
                    let v = v_pinv[(i, j)];
                    out[0] += v * p[0];
                    out[1] += v * p[1];
                }
                out
            })
            .collect(),
    }
}

fn check_inputs(d: &DistanceMatrix, w: &WeightSpec, cfg: &MdsConfig) -> Result<()> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(ClmdsError::EmptyInput);
    }
    w.check(d.len())
}

/// Runs majorization from `init` until the relative stress decrease drops
/// below `cfg.eps` or `cfg.max_iter` iterations have run. A step that would
/// raise the stress is discarded and ends the run.
pub fn smacof(d: &DistanceMatrix, w: &WeightSpec, init: Vec<Point2>, cfg: &MdsConfig) -> Result<MdsRun> {
    check_inputs(d, w, cfg)?;
    if init.len() != d.len() {
        return Err(ClmdsError::InvalidConfig(format!(
            "{} start points for {} dissimilarities",
            init.len(),
            d.len()
        )));
    }
    let update = Update::new(w, d.len())?;
    Ok(run_smacof(d, w, &update, init, cfg))
}

fn run_smacof(d: &DistanceMatrix, w: &WeightSpec, update: &Update, init: Vec<Point2>, cfg: &MdsConfig) -> MdsRun {
    let mut x = init;
    let mut current = stress(d, &x, w);
    let mut history = vec![current];
    for _ in 0..cfg.max_iter {
        let next = guttman(d, w, update, &x);
        let s = stress(d, &next, w);
        // an increase can only come from rounding near the optimum
        if s > current {
            break;
        }
        x = next;
        history.push(s);
        let decrease = current - s;
        current = s;
        if decrease <= cfg.eps * history[history.len() - 2] {
            break;
        }
    }
    MdsRun { coords: x, stress: current, history }
}

fn center(coords: &mut [Point2]) {
    let n = coords.len() as f64;
    let mx = coords.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = coords.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in coords {
        p[0] -= mx;
        p[1] -= my;
    }
}

fn random_start(n: usize, rng: &mut impl Rng) -> Vec<Point2> {
    (0..n).map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect()
}

/// Lowest-stress embedding over `cfg.n_init` random starts, centered at the
/// origin. One point maps to the origin; two points are laid out on the x axis
/// at their exact distance.
pub fn mds_embed(d: &DistanceMatrix, w: &WeightSpec, cfg: &MdsConfig) -> Result<MdsResult> {
    check_inputs(d, w, cfg)?;
    let n = d.len();
    match n {
        1 => {
            return Ok(MdsResult { coords: vec![[0.0, 0.0]], stress: 0.0, n_iter: 0 });
        }
        2 => {
            if w.weight(0, 1) <= 0.0 {
                return Err(ClmdsError::DegenerateWeights);
            }
            let h = 0.5 * d.get(0, 1);
            return Ok(MdsResult { coords: vec![[-h, 0.0], [h, 0.0]], stress: 0.0, n_iter: 0 });
        }
        _ => {}
    }
    let update = Update::new(w, n)?;
    let runs: Vec<MdsRun> = (0..cfg.n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed::derive(cfg.seed, r as u64));
            run_smacof(d, w, &update, random_start(n, &mut rng), cfg)
        })
        .collect();
    let mut best = &runs[0];
    for run in &runs[1..] {
        if run.stress < best.stress {
            best = run;
        }
    }
    let mut coords = best.coords.clone();
    center(&mut coords);
    Ok(MdsResult { coords, stress: best.stress, n_iter: best.history.len() - 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{euclidean_distances, FeatureSet};

    fn planar(points: &[Point2]) -> DistanceMatrix {
        euclidean_distances(&FeatureSet::new(points.iter().map(|p| p.to_vec()).collect()).unwrap())
    }

    #[test]
    fn stress_examples() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
        let d = planar(&tri);
        assert!(stress(&d, &tri, &WeightSpec::Uniform(1.0)) < 1e-24);

        let d = DistanceMatrix::from_trusted(2, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(stress(&d, &[[0.0, 0.0], [0.0, 0.0]], &WeightSpec::Uniform(1.0)), 1.0);
    }

    #[test]
    fn tiny_inputs() {
        let cfg = MdsConfig::default();
        let one = DistanceMatrix::from_trusted(1, vec![0.0]);
        let r = mds_embed(&one, &WeightSpec::default(), &cfg).unwrap();
        assert_eq!((r.coords, r.stress), (vec![[0.0, 0.0]], 0.0));

        let two = DistanceMatrix::from_trusted(2, vec![0.0, 3.0, 3.0, 0.0]);
        let r = mds_embed(&two, &WeightSpec::default(), &cfg).unwrap();
        assert!((dist(r.coords[0], r.coords[1]) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_weights_rejected() {
        let d = planar(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let e = mds_embed(&d, &WeightSpec::Uniform(0.0), &MdsConfig::default());
        assert_eq!(e, Err(ClmdsError::DegenerateWeights));
        let split = WeightSpec::PerCluster { labels: vec![0, 0, 1], weights: vec![1.0, 1.0], cross: 0.0 };
        assert_eq!(mds_embed(&d, &split, &MdsConfig::default()), Err(ClmdsError::DegenerateWeights));
    }

    #[test]
    fn recovers_planar_configuration() {
        let mut rng = seed::rng(11);
        let pts: Vec<Point2> = (0..20).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let d = planar(&pts);
        let w = WeightSpec::default();
        let r = mds_embed(&d, &w, &MdsConfig::default()).unwrap();
        assert!(r.stress / weighted_dissimilarity_norm(&d, &w) < 1e-6);
        let mx: f64 = r.coords.iter().map(|p| p[0]).sum::<f64>() / 20.0;
        let my: f64 = r.coords.iter().map(|p| p[1]).sum::<f64>() / 20.0;
        assert!(mx.abs() < 1e-9 && my.abs() < 1e-9);
    }

    #[test]
    fn general_weights_descend() {
        let mut rng = seed::rng(5);
        let pts: Vec<Point2> = (0..15).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let d = planar(&pts);
        let w = WeightSpec::PerCluster {
            labels: (0..15).map(|i| i % 3).collect(),
            weights: vec![1.0, 2.0, 0.5],
            cross: 0.3,
        };
        let run = smacof(&d, &w, random_start(15, &mut rng), &MdsConfig::default()).unwrap();
        for pair in run.history.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-12);
        }
        assert!(run.stress / weighted_dissimilarity_norm(&d, &w) < 1e-4);
    }

    #[test]
    fn seeded_restarts_are_deterministic() {
        let d = planar(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [-1.0, 0.5]]);
        let cfg = MdsConfig { seed: 9, ..MdsConfig::default() };
        let a = mds_embed(&d, &WeightSpec::default(), &cfg).unwrap();
        assert_eq!(a, mds_embed(&d, &WeightSpec::default(), &cfg).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rigid_motions_keep_stress(
                pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..12),
                layout in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 12),
                angle in 0.0f64..std::f64::consts::TAU,
                shift in (-3.0f64..3.0, -3.0f64..3.0),
            ) {
                let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| [x, y]).collect();
                let d = planar(&pts);
                let layout: Vec<Point2> = layout[..pts.len()].iter().map(|&(x, y)| [x, y]).collect();
                let (c, s) = (angle.cos(), angle.sin());
                let moved: Vec<Point2> = layout
                    .iter()
                    .map(|p| [c * p[0] - s * p[1] + shift.0, s * p[0] + c * p[1] + shift.1])
                    .collect();
                let w = WeightSpec::default();
                let (a, b) = (stress(&d, &layout, &w), stress(&d, &moved, &w));
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }

            #[test]
            fn stress_never_increases(
                pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 3..15),
                s in any::<u64>(),
            ) {
                let fs = FeatureSet::new(pts.iter().map(|&(x, y, z)| vec![x, y, z]).collect()).unwrap();
                let d = euclidean_distances(&fs);
                let mut rng = seed::rng(s);
                let start = random_start(d.len(), &mut rng);
                let run = smacof(&d, &WeightSpec::default(), start, &MdsConfig::default()).unwrap();
                for pair in run.history.windows(2) {
                    prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].max(1.0));
                }
            }
        }
    }
}
