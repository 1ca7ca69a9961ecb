//! k-medoids clustering on a precomputed distance matrix.
//!
//! Alternating assignment / medoid-update iterations, seeded by farthest-point
//! sampling of the most isolated points plus random picks, and restarted many
//! times keeping the clustering with the lowest relative incoherence.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Clustering, DistanceMatrix};
use crate::error::{ClmdsError, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Uniformly random initial medoids.
    Random,
    /// The `n_iso` most isolated points (at least one), then random picks.
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmedoidsConfig {
    pub k: usize,
    pub init: InitStrategy,
    pub n_iso: usize,
    /// Number of restarts.
    pub iter_med: usize,
    /// Cap on assignment/update rounds per restart.
    pub max_swaps: usize,
    pub seed: u64,
    /// Replaces the strategy for the first restart when given.
    pub initial_medoids: Option<Vec<usize>>,
}

impl KmedoidsConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            init: InitStrategy::Isolated,
            n_iso: 1,
            iter_med: 100,
            max_swaps: 1000,
            seed: 0,
            initial_medoids: None,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(ClmdsError::InvalidConfig("k must be positive".into()));
        }
        if self.k > n {
            return Err(ClmdsError::TooManyClusters { k: self.k, n });
        }
        if self.n_iso > self.k {
            return Err(ClmdsError::InvalidConfig(format!(
                "n_iso = {} exceeds k = {}",
                self.n_iso, self.k
            )));
        }
        if self.iter_med == 0 || self.max_swaps == 0 {
            return Err(ClmdsError::InvalidConfig("iter_med and max_swaps must be positive".into()));
        }
        if let Some(init) = &self.initial_medoids {
            validate_medoids(init, self.k, n)?;
        }
        Ok(())
    }

    fn n_isolated(&self) -> usize {
        match self.init {
            InitStrategy::Random => 0,
            InitStrategy::Isolated => self.n_iso.max(1).min(self.k),
        }
    }
}

fn validate_medoids(medoids: &[usize], k: usize, n: usize) -> Result<()> {
    if medoids.len() != k {
        return Err(ClmdsError::InvalidConfig(format!(
            "{} initial medoids given for k = {k}",
            medoids.len()
        )));
    }
    let mut seen = vec![false; n];
    for &m in medoids {
        if m >= n || std::mem::replace(&mut seen[m], true) {
            return Err(ClmdsError::InvalidConfig(format!("initial medoid {m} invalid or repeated")));
        }
    }
    Ok(())
}

/// Farthest-point ordering: the point with the largest total distance first,
/// then repeatedly the point farthest from everything chosen so far.
pub fn farthest_point_sampling(d: &DistanceMatrix, count: usize) -> Vec<usize> {
    let n = d.len();
    let count = count.min(n);
    let mut chosen = Vec::with_capacity(count);
    if count == 0 {
        return chosen;
    }
    let first = argmax((0..n).map(|i| d.row(i).iter().sum::<f64>()));
    chosen.push(first);
    let mut taken = vec![false; n];
    taken[first] = true;
    let mut nearest: Vec<f64> = d.row(first).to_vec();
    while chosen.len() < count {
        let next = argmax(
            (0..n).map(|i| if taken[i] { f64::NEG_INFINITY } else { nearest[i] }),
        );
        chosen.push(next);
        taken[next] = true;
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(d.get(i, next));
        }
    }
    chosen
}

/// First index of the maximum; ties keep the lowest index.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn initial_medoids_with(d: &DistanceMatrix, cfg: &KmedoidsConfig, rng: &mut impl Rng) -> Vec<usize> {
    let n = d.len();
    let mut medoids = farthest_point_sampling(d, cfg.n_isolated());
    let mut taken = vec![false; n];
    for &m in &medoids {
        taken[m] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    let extra = cfg.k - medoids.len();
    medoids.extend(index::sample(rng, rest.len(), extra).into_iter().map(|j| rest[j]));
    medoids
}

/// Initial medoids for one run under `cfg.seed`.
pub fn select_initial_medoids(d: &DistanceMatrix, cfg: &KmedoidsConfig) -> Result<Vec<usize>> {
    cfg.validate(d.len())?;
    Ok(initial_medoids_with(d, cfg, &mut seed::rng(cfg.seed)))
}

/// Nearest-medoid assignment. A medoid always belongs to its own cluster;
/// other ties go to the lowest cluster index.
fn assign(d: &DistanceMatrix, medoids: &[usize]) -> Vec<usize> {
    let n = d.len();
    let mut assignment = vec![usize::MAX; n];
    for (c, &m) in medoids.iter().enumerate() {
        assignment[m] = c;
    }
    for (i, slot) in assignment.iter_mut().enumerate() {
        if *slot != usize::MAX {
            continue;
        }
        let row = d.row(i);
        let mut best = (0, row[medoids[0]]);
        for (c, &m) in medoids.iter().enumerate().skip(1) {
            if row[m] < best.1 {
                best = (c, row[m]);
            }
        }
        *slot = best.0;
    }
    assignment
}

/// Member of `members` with the smallest distance sum to the others; ties go to
/// the lowest point index (`members` is ascending).
fn cluster_median(d: &DistanceMatrix, members: &[usize]) -> usize {
    let mut best = (members[0], f64::INFINITY);
    for &j in members {
        let row = d.row(j);
        let cost: f64 = members.iter().map(|&i| row[i]).sum();
        if cost < best.1 {
            best = (j, cost);
        }
    }
    best.0
}

/// One k-medoids run from `initial` until the medoid set is stable or
/// `max_swaps` rounds have run.
pub fn kmedoids_once(d: &DistanceMatrix, initial: &[usize], max_swaps: usize) -> Result<Clustering> {
    validate_medoids(initial, initial.len(), d.len())?;
    if initial.is_empty() {
        return Err(ClmdsError::InvalidConfig("no initial medoids".into()));
    }
    let k = initial.len();
    let mut medoids = initial.to_vec();
    let mut assignment = assign(d, &medoids);
    for _ in 0..max_swaps {
        let mut members = vec![Vec::new(); k];
        for (i, &c) in assignment.iter().enumerate() {
            members[c].push(i);
        }
        let updated: Vec<usize> = members.iter().map(|m| cluster_median(d, m)).collect();
        if updated == medoids {
            break;
        }
        medoids = updated;
        assignment = assign(d, &medoids);
    }
    Clustering::new(assignment, medoids)
}

/// Relative intra-cluster incoherence: sum over clusters of the mean
/// member-to-medoid distance.
pub fn relative_incoherence(d: &DistanceMatrix, c: &Clustering) -> f64 {
    let k = c.n_clusters();
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (i, &cl) in c.assignment().iter().enumerate() {
        sums[cl] += d.get(i, c.medoids()[cl]);
        sizes[cl] += 1;
    }
    sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).sum()
}

/// Total member-to-medoid distance, the quantity each k-medoids round lowers.
pub fn clustering_cost(d: &DistanceMatrix, c: &Clustering) -> f64 {
    c.assignment()
        .iter()
        .enumerate()
        .map(|(i, &cl)| d.get(i, c.medoids()[cl]))
        .sum()
}

/// Best of `iter_med` restarts by relative incoherence; the earliest restart
/// wins ties. Restarts run in parallel with per-restart seeds, so the result
/// does not depend on scheduling.
pub fn kmedoids_best(d: &DistanceMatrix, cfg: &KmedoidsConfig) -> Result<Clustering> {
    cfg.validate(d.len())?;
    let runs: Vec<(f64, Clustering)> = (0..cfg.iter_med)
        .into_par_iter()
        .map(|r| {
            let init = match (&cfg.initial_medoids, r) {
                (Some(init), 0) => init.clone(),
                _ => initial_medoids_with(d, cfg, &mut seed::rng(seed::derive(cfg.seed, r as u64))),
            };
            let c = kmedoids_once(d, &init, cfg.max_swaps)?;
            Ok((relative_incoherence(d, &c), c))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, Clustering)> = None;
    for (score, c) in runs {
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, c));
        }
    }
    Ok(best.expect("iter_med > 0").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{euclidean_distances, FeatureSet};

    fn line(xs: &[f64]) -> DistanceMatrix {
        euclidean_distances(&FeatureSet::new(xs.iter().map(|&x| vec![x]).collect()).unwrap())
    }

    fn blobs() -> DistanceMatrix {
        let mut rows = Vec::new();
        for &(cx, cy) in &[(0.0, 0.0), (20.0, 5.0)] {
            for &(dx, dy) in &[(0.0, 0.0), (1.0, 0.2), (0.3, 1.1), (0.9, 0.8)] {
                rows.push(vec![cx + dx, cy + dy]);
            }
        }
        euclidean_distances(&FeatureSet::new(rows).unwrap())
    }

    #[test]
    fn isolated_picks_extremes() {
        let d = line(&[0.0, 1.0, 10.0]);
        let mut cfg = KmedoidsConfig::new(2);
        cfg.n_iso = 2;
        assert_eq!(select_initial_medoids(&d, &cfg).unwrap(), vec![2, 0]);
    }

    #[test]
    fn k_equals_n_takes_everything() {
        let d = line(&[0.0, 1.0, 3.0, 7.0]);
        let mut m = select_initial_medoids(&d, &KmedoidsConfig::new(4)).unwrap();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2, 3]);
    }

    #[test]
    fn random_init_is_seeded() {
        let d = line(&(0..30).map(f64::from).collect::<Vec<_>>());
        let mut cfg = KmedoidsConfig::new(5);
        cfg.init = InitStrategy::Random;
        cfg.n_iso = 0;
        cfg.seed = 7;
        let a = select_initial_medoids(&d, &cfg).unwrap();
        assert_eq!(a, select_initial_medoids(&d, &cfg).unwrap());
        cfg.seed = 8;
        assert_ne!(a, select_initial_medoids(&d, &cfg).unwrap());
    }

    #[test]
    fn too_many_clusters() {
        let d = line(&[0.0, 1.0]);
        assert_eq!(
            kmedoids_best(&d, &KmedoidsConfig::new(3)),
            Err(ClmdsError::TooManyClusters { k: 3, n: 2 })
        );
    }

    #[test]
    fn incoherence_examples() {
        let d = line(&[0.0, 1.0]);
        let c = Clustering::new(vec![0, 0], vec![0]).unwrap();
        assert_eq!(relative_incoherence(&d, &c), 0.5);

        let d = line(&[0.0, 1.0, 10.0, 11.0]);
        let c = Clustering::new(vec![0, 0, 1, 1], vec![0, 2]).unwrap();
        assert_eq!(relative_incoherence(&d, &c), 1.0);

        let singletons = Clustering::new(vec![0, 1, 2, 3], vec![0, 1, 2, 3]).unwrap();
        assert_eq!(relative_incoherence(&d, &singletons), 0.0);
    }

    #[test]
    fn separated_blobs_split_cleanly() {
        let d = blobs();
        let c = kmedoids_once(&d, &[0, 1], 100).unwrap();
        let members = c.members();
        let mut groups: Vec<Vec<usize>> = members.clone();
        groups.sort();
        assert_eq!(groups, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
        for (k, m) in members.iter().enumerate() {
            // exhaustive 1-median of the blob
            let oracle = *m
                .iter()
                .min_by(|&&a, &&b| {
                    let sa: f64 = m.iter().map(|&i| d.get(a, i)).sum();
                    let sb: f64 = m.iter().map(|&i| d.get(b, i)).sum();
                    sa.partial_cmp(&sb).unwrap()
                })
                .unwrap();
            assert_eq!(c.medoids()[k], oracle);
        }
    }

    #[test]
    fn single_cluster_is_one_median() {
        let d = line(&[0.0, 0.5, 2.0, 6.0, 6.5]);
        let c = kmedoids_once(&d, &[4], 100).unwrap();
        let sums: Vec<f64> = (0..5).map(|i| d.row(i).iter().sum()).collect();
        let oracle = (0..5).min_by(|&a, &b| sums[a].partial_cmp(&sums[b]).unwrap()).unwrap();
        assert_eq!(c.medoids(), &[oracle]);
    }

    #[test]
    fn identical_points_are_deterministic() {
        let d = DistanceMatrix::from_trusted(4, vec![0.0; 16]);
        let c = kmedoids_once(&d, &[2, 3], 100).unwrap();
        // both medoids fall back to the lowest index members by the tie rule
        assert_eq!(c.medoids(), &[0, 3]);
        assert_eq!(c.assignment(), &[0, 0, 0, 1]);
        assert_eq!(c, kmedoids_once(&d, &[2, 3], 100).unwrap());
    }

    #[test]
    fn single_restart_matches_once() {
        let d = blobs();
        let mut cfg = KmedoidsConfig::new(2);
        cfg.iter_med = 1;
        cfg.seed = 3;
        let init = initial_medoids_with(&d, &cfg, &mut seed::rng(seed::derive(3, 0)));
        assert_eq!(kmedoids_best(&d, &cfg).unwrap(), kmedoids_once(&d, &init, cfg.max_swaps).unwrap());
    }

    #[test]
    fn custom_initial_medoids_are_checked() {
        let d = blobs();
        let mut cfg = KmedoidsConfig::new(2);
        cfg.initial_medoids = Some(vec![1, 1]);
        assert!(kmedoids_best(&d, &cfg).is_err());
        cfg.initial_medoids = Some(vec![1, 5]);
        cfg.iter_med = 1;
        let c = kmedoids_best(&d, &cfg).unwrap();
        assert_eq!(c, kmedoids_once(&d, &[1, 5], cfg.max_swaps).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (DistanceMatrix, Vec<usize>)> {
            (3usize..20, 1usize..4).prop_flat_map(|(n, k)| {
                (
                    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), n),
                    Just(k.min(n)),
                    any::<u64>(),
                )
                    .prop_map(|(pts, k, s)| {
                        let d = euclidean_distances(&FeatureSet::new(pts).unwrap());
                        let mut cfg = KmedoidsConfig::new(k);
                        cfg.init = InitStrategy::Random;
                        cfg.seed = s;
                        let init = select_initial_medoids(&d, &cfg).unwrap();
                        (d, init)
                    })
            })
        }

        proptest! {
            #[test]
            fn cost_never_increases((d, init) in instance()) {
                let mut prev = f64::INFINITY;
                for rounds in 1..12 {
                    let c = kmedoids_once(&d, &init, rounds).unwrap();
                    let cost = clustering_cost(&d, &c);
                    prop_assert!(cost <= prev + 1e-12);
                    prev = cost;
                }
            }

            #[test]
            fn medoids_are_locally_optimal((d, init) in instance()) {
                let c = kmedoids_once(&d, &init, 1000).unwrap();
                for (k, members) in c.members().iter().enumerate() {
                    let cost = |m: usize| members.iter().map(|&i| d.get(i, m)).sum::<f64>();
                    let current = cost(c.medoids()[k]);
                    for &j in members {
                        prop_assert!(cost(j) >= current - 1e-12);
                    }
                }
            }
        }
    }
}
