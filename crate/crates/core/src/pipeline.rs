//! The cluster-MDS pipeline: clustering, per-cluster local MDS, anchor
//! selection, anchor MDS, and stitching, repeated over a cluster hierarchy;
//! plus sparsification and out-of-sample estimation for vector inputs.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{cluster_anchors, select_anchors, AnchorConfig};
use crate::data::{
    euclidean, euclidean_distances, ClmdsResult, Clustering, DistanceMatrix, FeatureSet, HierarchySpec,
    LevelResult, Point2,
};
use crate::error::{ClmdsError, Result};
use crate::kernel::{
    kernel_distance, kernel_matrix, kernel_to_distance, kernel_value, medoid_weighted_submatrix, unit_descriptors,
    KernelConfig, KernelMatrix,
};
use crate::kmedoids::{kmedoids_best, relative_incoherence, KmedoidsConfig};
use crate::mds::{mds_embed, MdsConfig, WeightSpec};
use crate::seed;
use crate::transforms::{choose_best_transform, classify_transform, Transform2D, MIN_W};

/// How the sparse set is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sparsify {
    None,
    Random,
    /// Rows of the distance matrix with the largest Euclidean norm.
    Cur,
    Explicit(Vec<usize>),
}

/// Candidate pool for the anchors of merged clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPool {
    /// Anchors of the member clusters.
    MemberAnchors,
    /// Every point of the merged cluster.
    FullCluster,
}

/// Stress weights: one per finest cluster for pairs inside it, `cross` for
/// anchor pairs from different clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterWeights {
    pub default: f64,
    /// Overrides `default` for the finest clusters they index.
    pub per_cluster: Vec<f64>,
    pub cross: f64,
}

impl Default for ClusterWeights {
    fn default() -> Self {
        Self { default: 1.0, per_cluster: Vec::new(), cross: 1.0 }
    }
}

impl ClusterWeights {
    pub fn for_cluster(&self, k: usize) -> f64 {
        self.per_cluster.get(k).copied().unwrap_or(self.default)
    }
}

/// Pipeline configuration. `seed` drives every random choice; the seeds inside
/// `kmedoids` and `mds` are replaced by streams derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClmdsConfig {
    pub hierarchy: HierarchySpec,
    /// `k` is taken from the hierarchy at each level.
    pub kmedoids: KmedoidsConfig,
    pub mds: MdsConfig,
    pub anchors: AnchorConfig,
    pub anchor_pool: AnchorPool,
    pub weights: ClusterWeights,
    pub sparsify: Sparsify,
    pub n_sparse: usize,
    pub seed: u64,
}

impl ClmdsConfig {
    pub fn new(hierarchy: HierarchySpec) -> Self {
        let k = hierarchy.finest();
        Self {
            hierarchy,
            kmedoids: KmedoidsConfig::new(k),
            mds: MdsConfig::default(),
            anchors: AnchorConfig::default(),
            anchor_pool: AnchorPool::MemberAnchors,
            weights: ClusterWeights::default(),
            sparsify: Sparsify::None,
            n_sparse: 0,
            seed: 0,
        }
    }

    fn kmedoids_for(&self, k: usize, stream: u64) -> KmedoidsConfig {
        let mut cfg = self.kmedoids.clone();
        cfg.k = k;
        cfg.n_iso = cfg.n_iso.min(k);
        cfg.seed = seed::derive(self.seed, stream);
        if stream != STREAM_KMEDOIDS {
            cfg.initial_medoids = None;
        }
        cfg
    }

    fn mds_for(&self, stream: u64) -> MdsConfig {
        MdsConfig { seed: seed::derive(self.seed, stream), ..self.mds.clone() }
    }
}

const STREAM_KMEDOIDS: u64 = 1;
const STREAM_SPARSIFY: u64 = 2;
const STREAM_MERGE: u64 = 100;
const STREAM_LOCAL_MDS: u64 = 1 << 20;
const STREAM_GROUP_MDS: u64 = 1 << 40;

/// Chosen sparse points and their complement, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseSelection {
    pub sparse: Vec<usize>,
    pub complement: Vec<usize>,
}

impl SparseSelection {
    fn from_sparse(mut sparse: Vec<usize>, n: usize) -> Self {
        sparse.sort_unstable();
        let mut flag = vec![false; n];
        for &i in &sparse {
            flag[i] = true;
        }
        let complement = (0..n).filter(|&i| !flag[i]).collect();
        Self { sparse, complement }
    }
}

/// Dissimilarity between descriptor vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// Kernel-induced distance; `weighted` switches the anchor MDS to the
    /// medoid-weighted distance.
    Kernel { kernel: KernelConfig, weighted: bool },
}

/// Descriptors prepared for a metric (unit-normalised for kernels).
struct Prepared {
    fs: FeatureSet,
    metric: Metric,
}

impl Prepared {
    fn new(fs: &FeatureSet, metric: &Metric) -> Result<Self> {
        let fs = match metric {
            Metric::Euclidean => fs.clone(),
            Metric::Kernel { kernel, .. } => {
                kernel.validate()?;
                unit_descriptors(fs, kernel)?
            }
        };
        Ok(Self { fs, metric: metric.clone() })
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.metric {
            Metric::Euclidean => euclidean(self.fs.row(i), self.fs.row(j)),
            Metric::Kernel { kernel, .. } => kernel_distance(kernel_value(self.fs.row(i), self.fs.row(j), kernel.zeta)),
        }
    }

    fn matrix(&self, points: &[usize]) -> Result<(DistanceMatrix, Option<KernelMatrix>)> {
        let sub = self.fs.subset(points);
        match &self.metric {
            Metric::Euclidean => Ok((euclidean_distances(&sub), None)),
            Metric::Kernel { kernel, weighted } => {
                let cfg = KernelConfig { normalize: false, ..kernel.clone() };
                let k = kernel_matrix(&sub, &cfg)?;
                let d = kernel_to_distance(&k)?;
                Ok((d, weighted.then_some(k)))
            }
        }
    }
}

/// What the pipeline embeds.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Distances(&'a DistanceMatrix),
    Features { features: &'a FeatureSet, metric: &'a Metric },
}

impl Input<'_> {
    pub fn len(&self) -> usize {
        match self {
            Input::Distances(d) => d.len(),
            Input::Features { features, .. } => features.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Picks the sparse set. `cur` ranks rows of the distance matrix by Euclidean
/// norm (descending, lower index first on ties); for vector input the norms
/// are accumulated without materialising the matrix.
pub fn sparsify_select(input: Input<'_>, cfg: &ClmdsConfig) -> Result<SparseSelection> {
    let n = input.len();
    let check_size = |m: usize| -> Result<()> {
        if m < cfg.hierarchy.finest() {
            return Err(ClmdsError::InvalidSparse(format!(
                "sparse set of {m} is smaller than the finest cluster count {}",
                cfg.hierarchy.finest()
            )));
        }
        if m > n {
            return Err(ClmdsError::InvalidSparse(format!("n_sparse = {m} exceeds N = {n}")));
        }
        Ok(())
    };
    let sparse = match &cfg.sparsify {
        Sparsify::None => (0..n).collect(),
        Sparsify::Random => {
            check_size(cfg.n_sparse)?;
            let mut rng = seed::rng(seed::derive(cfg.seed, STREAM_SPARSIFY));
            index::sample(&mut rng, n, cfg.n_sparse).into_vec()
        }
        Sparsify::Cur => {
            check_size(cfg.n_sparse)?;
            let norms: Vec<f64> = match input {
                Input::Distances(d) => (0..n).map(|i| d.row(i).iter().map(|v| v * v).sum::<f64>()).collect(),
                Input::Features { features, metric } => {
                    let prep = Prepared::new(features, metric)?;
                    (0..n)
                        .into_par_iter()
                        .map(|i| (0..n).map(|j| prep.distance(i, j).powi(2)).sum::<f64>())
                        .collect()
                }
            };
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
            order.truncate(cfg.n_sparse);
            order
        }
        Sparsify::Explicit(list) => {
            check_size(list.len())?;
            let mut seen = vec![false; n];
            for &i in list {
                if i >= n {
                    return Err(ClmdsError::InvalidSparse(format!("index {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(ClmdsError::InvalidSparse(format!("index {i} repeated")));
                }
            }
            list.clone()
        }
    };
    Ok(SparseSelection::from_sparse(sparse, n))
}

/// Merges level-`m` clusters by k-medoids on their medoids. Returns the merged
/// clustering and the merged cluster of each level-`m` cluster.
pub fn hierarchy_merge(
    previous: &Clustering,
    d: &DistanceMatrix,
    target: usize,
    cfg: &KmedoidsConfig,
) -> Result<(Clustering, Vec<usize>)> {
    let n_prev = previous.n_clusters();
    if target == 0 || target >= n_prev {
        return Err(ClmdsError::InvalidHierarchy(format!(
            "cannot merge {n_prev} clusters into {target}"
        )));
    }
    let medoids = previous.medoids();
    let dm = d.submatrix(medoids);
    let mut kcfg = cfg.clone();
    kcfg.k = target;
    kcfg.n_iso = kcfg.n_iso.min(target);
    kcfg.initial_medoids = None;
    let grouping = kmedoids_best(&dm, &kcfg)?;
    let parent = grouping.assignment().to_vec();
    let mut merged_medoids = Vec::with_capacity(target);
    for g in 0..target {
        let group: Vec<usize> = (0..n_prev).filter(|&k| parent[k] == g).collect();
        let mut best = (usize::MAX, f64::INFINITY);
        for &a in &group {
            let cost: f64 = group.iter().map(|&b| dm.get(a, b)).sum();
            if cost < best.1 {
                best = (medoids[a], cost);
            }
        }
        merged_medoids.push(best.0);
    }
    let assignment = previous.assignment().iter().map(|&c| parent[c]).collect();
    Ok((Clustering::new(assignment, merged_medoids)?, parent))
}

/// Distances used by the anchor MDS.
enum AnchorDistances<'a> {
    Plain,
    MedoidWeighted { kernel: &'a KernelMatrix, eta: u32 },
}

fn position(members: &[usize], point: usize) -> usize {
    members.binary_search(&point).expect("anchor belongs to its cluster")
}

/// Embeds a full distance matrix (no sparsification).
fn embed_core(d: &DistanceMatrix, anchor_d: AnchorDistances<'_>, cfg: &ClmdsConfig) -> Result<ClmdsResult> {
    let n = d.len();
    let levels = cfg.hierarchy.levels();
    if levels[0] > n {
        return Err(ClmdsError::TooManyClusters { k: levels[0], n });
    }
    cfg.anchors.validate()?;

    let finest = kmedoids_best(d, &cfg.kmedoids_for(levels[0], STREAM_KMEDOIDS))?;
    let incoherence = relative_incoherence(d, &finest);
    let mut members = finest.members();

    // local MDS per finest cluster
    let local: Vec<(Vec<Point2>, f64)> = members
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let r = mds_embed(
                &d.submatrix(m),
                &WeightSpec::Uniform(cfg.weights.for_cluster(k)),
                &cfg.mds_for(STREAM_LOCAL_MDS + k as u64),
            )?;
            Ok((r.coords, r.stress))
        })
        .collect::<Result<_>>()?;
    let local_stress: Vec<f64> = local.iter().map(|l| l.1).collect();
    let mut reps: Vec<Vec<Point2>> = local.into_iter().map(|l| l.0).collect();

    let mut local_coords = vec![[0.0; 2]; n];
    for (m, rep) in members.iter().zip(&reps) {
        for (&i, &p) in m.iter().zip(rep) {
            local_coords[i] = p;
        }
    }

    let mut clustering = finest.clone();
    let mut anchors = select_anchors(d, &clustering, &cfg.anchors)?.per_cluster;
    let mut per_level = Vec::with_capacity(levels.len() - 1);
    for (m, &target) in levels.iter().enumerate().skip(1) {
        let (next, parent) = hierarchy_merge(&clustering, d, target, &cfg.kmedoids_for(target, STREAM_MERGE + m as u64))?;
        let next_members = next.members();
        let level_weights: Vec<f64> = if m == 1 {
            (0..clustering.n_clusters()).map(|k| cfg.weights.for_cluster(k)).collect()
        } else {
            vec![cfg.weights.default; clustering.n_clusters()]
        };

        let groups: Vec<GroupStitch> = (0..target)
            .into_par_iter()
            .map(|g| {
                let clusters: Vec<usize> = (0..clustering.n_clusters()).filter(|&k| parent[k] == g).collect();
                stitch_group(GroupInput {
                    d,
                    anchor_d: &anchor_d,
                    finest: &finest,
                    clusters: &clusters,
                    anchors: &anchors,
                    members: &members,
                    reps: &reps,
                    level_weights: &level_weights,
                    cross: cfg.weights.cross,
                    mds: cfg.mds_for(STREAM_GROUP_MDS + ((m as u64) << 24) + g as u64),
                    group_members: &next_members[g],
                })
            })
            .collect::<Result<_>>()?;

        let k_prev = clustering.n_clusters();
        let mut anchor_coords = vec![Vec::new(); k_prev];
        let mut transforms = vec![Transform2D::identity(); k_prev];
        let mut residues = vec![0.0; k_prev];
        let mut group_stress = Vec::with_capacity(target);
        let mut next_reps = Vec::with_capacity(target);
        for group in groups {
            for (k, coords, t, r) in group.per_cluster {
                anchor_coords[k] = coords;
                transforms[k] = t;
                residues[k] = r;
            }
            group_stress.push(group.stress);
            next_reps.push(group.rep);
        }

        let next_anchors: Vec<Vec<usize>> = if target > 1 {
            (0..target)
                .into_par_iter()
                .map(|g| {
                    let pool: Vec<usize> = match cfg.anchor_pool {
                        AnchorPool::MemberAnchors => {
                            let mut p: Vec<usize> = (0..k_prev)
                                .filter(|&k| parent[k] == g)
                                .flat_map(|k| anchors[k].iter().copied())
                                .collect();
                            p.sort_unstable();
                            p
                        }
                        AnchorPool::FullCluster => next_members[g].clone(),
                    };
                    let medoid = next.medoids()[g];
                    let mut pool_with_medoid = pool.clone();
                    if let Err(pos) = pool_with_medoid.binary_search(&medoid) {
                        pool_with_medoid.insert(pos, medoid);
                    }
                    let mut chosen = cluster_anchors(d, &pool_with_medoid, medoid, &cfg.anchors);
                    if chosen.len() > pool.len() && cfg.anchor_pool == AnchorPool::MemberAnchors {
                        chosen = pool;
                    }
                    chosen
                })
                .collect()
        } else {
            Vec::new()
        };

        per_level.push(LevelResult {
            clustering: clustering.clone(),
            parent,
            anchors: std::mem::take(&mut anchors),
            anchor_coords,
            transforms,
            residues,
            group_stress,
        });
        clustering = next;
        members = next_members;
        reps = next_reps;
        anchors = next_anchors;
    }

    let mut coords = vec![[0.0; 2]; n];
    for (&i, &p) in members[0].iter().zip(&reps[0]) {
        coords[i] = p;
    }
    let cluster_transforms = composite_transforms(&per_level);
    Ok(ClmdsResult {
        coords,
        clustering: finest,
        per_level,
        local_coords,
        cluster_transforms,
        local_stress,
        incoherence,
        sparse_indices: (0..n).collect(),
        estimated_mask: vec![false; n],
        fallback_clusters: Vec::new(),
        estimation_unavailable: false,
    })
}

/// Per finest cluster, the product of its transforms up the hierarchy.
fn composite_transforms(per_level: &[LevelResult]) -> Vec<Transform2D> {
    let Some(first) = per_level.first() else { return Vec::new() };
    (0..first.clustering.n_clusters())
        .map(|k| {
            let mut t = Transform2D::identity();
            let mut c = k;
            for level in per_level {
                t = level.transforms[c].compose(&t);
                c = level.parent[c];
            }
            t
        })
        .collect()
}

struct GroupInput<'a> {
    d: &'a DistanceMatrix,
    anchor_d: &'a AnchorDistances<'a>,
    finest: &'a Clustering,
    /// Level-m clusters merged into this group.
    clusters: &'a [usize],
    anchors: &'a [Vec<usize>],
    members: &'a [Vec<usize>],
    reps: &'a [Vec<Point2>],
    level_weights: &'a [f64],
    cross: f64,
    mds: MdsConfig,
    /// Points of the group, ascending.
    group_members: &'a [usize],
}

struct GroupStitch {
    /// (cluster, anchor coordinates, transform, residue)
    per_cluster: Vec<(usize, Vec<Point2>, Transform2D, f64)>,
    stress: f64,
    /// Stitched coordinates aligned with the group's members.
    rep: Vec<Point2>,
}

/// Anchor MDS of one group and the stitching of its member clusters.
fn stitch_group(input: GroupInput<'_>) -> Result<GroupStitch> {
    let mut pool = Vec::new();
    let mut labels = Vec::new();
    for (slot, &k) in input.clusters.iter().enumerate() {
        for &a in &input.anchors[k] {
            pool.push(a);
            labels.push(slot);
        }
    }
    let pool_d = match input.anchor_d {
        AnchorDistances::Plain => input.d.submatrix(&pool),
        AnchorDistances::MedoidWeighted { kernel, eta } => medoid_weighted_submatrix(kernel, input.finest, *eta, &pool),
    };
    let weights = WeightSpec::PerCluster {
        labels,
        weights: input.clusters.iter().map(|&k| input.level_weights[k]).collect(),
        cross: input.cross,
    };
    let global = mds_embed(&pool_d, &weights, &input.mds)?;

    let mut per_cluster = Vec::with_capacity(input.clusters.len());
    let mut rep = vec![[0.0; 2]; input.group_members.len()];
    let mut offset = 0;
    for &k in input.clusters {
        let n_anc = input.anchors[k].len();
        let anchors_global = global.coords[offset..offset + n_anc].to_vec();
        offset += n_anc;
        let members = &input.members[k];
        let anchors_local: Vec<Point2> =
            input.anchors[k].iter().map(|&a| input.reps[k][position(members, a)]).collect();
        let plan = classify_transform(&anchors_local, &anchors_global)?;
        let stitch = choose_best_transform(&input.reps[k], &anchors_local, &anchors_global, &plan)?;
        for (&i, &p) in members.iter().zip(&stitch.mapped) {
            rep[position(input.group_members, i)] = p;
        }
        per_cluster.push((k, anchors_global, stitch.transform, stitch.residue));
    }
    Ok(GroupStitch { per_cluster, stress: global.stress, rep })
}

/// Embeds a distance matrix through the full hierarchy.
pub fn clmds_embed(d: &DistanceMatrix, cfg: &ClmdsConfig) -> Result<ClmdsResult> {
    embed_core(d, AnchorDistances::Plain, cfg)
}

/// Embeds kernel-induced distances, optionally using the medoid-weighted
/// distance for the anchor MDS.
pub fn clmds_embed_kernel(k: &KernelMatrix, eta: Option<u32>, cfg: &ClmdsConfig) -> Result<ClmdsResult> {
    let d = kernel_to_distance(k)?;
    let anchor_d = match eta {
        None => AnchorDistances::Plain,
        Some(0) => return Err(ClmdsError::InvalidConfig("eta must be >= 1".into())),
        Some(eta) => AnchorDistances::MedoidWeighted { kernel: k, eta },
    };
    embed_core(&d, anchor_d, cfg)
}

/// Full run: sparsification, the pipeline on the sparse set, and
/// out-of-sample estimation when vectors are available.
pub fn run(input: Input<'_>, cfg: &ClmdsConfig) -> Result<ClmdsResult> {
    if input.is_empty() {
        return Err(ClmdsError::EmptyInput);
    }
    let sel = sparsify_select(input, cfg)?;
    match input {
        Input::Distances(d) => {
            if sel.complement.is_empty() {
                return clmds_embed(d, cfg);
            }
            let mut result = clmds_embed(&d.submatrix(&sel.sparse), cfg)?;
            result.sparse_indices = sel.sparse;
            result.estimation_unavailable = true;
            Ok(result)
        }
        Input::Features { features, metric } => {
            let prep = Prepared::new(features, metric)?;
            let (d, kernel) = prep.matrix(&sel.sparse)?;
            let eta = match (metric, kernel.is_some()) {
                (Metric::Kernel { kernel, .. }, true) => Some(kernel.eta),
                _ => None,
            };
            let sparse_result = match (&kernel, eta) {
                (Some(k), Some(eta)) => embed_core(&d, AnchorDistances::MedoidWeighted { kernel: k, eta }, cfg)?,
                _ => clmds_embed(&d, cfg)?,
            };
            if sel.complement.is_empty() {
                return Ok(sparse_result);
            }
            estimate_with(&prep, &sparse_result, &sel)
        }
    }
}

/// Places the points outside the sparse set.
///
/// Each joins the cluster of its nearest medoid; a per-cluster least-squares
/// affine map from descriptors to local coordinates, composed with the
/// cluster's local-to-final transform, gives its coordinates. Sparse points
/// keep theirs. Clusters with fewer than three sparse members place their new
/// points at the image of the cluster's mean local coordinate and are listed
/// in `fallback_clusters`.
pub fn estimate_out_of_sample(
    fs: &FeatureSet,
    metric: &Metric,
    sparse_result: &ClmdsResult,
    sel: &SparseSelection,
) -> Result<ClmdsResult> {
    let prep = Prepared::new(fs, metric)?;
    estimate_with(&prep, sparse_result, sel)
}

/// Least-squares affine from descriptors to the plane: `y ≈ W' x + b`.
struct DescriptorMap {
    w: DMatrix<f64>,
    x_mean: DVector<f64>,
    y_mean: Point2,
}

impl DescriptorMap {
    fn fit(xs: &[&[f64]], ys: &[Point2]) -> Result<Self> {
        let (m, dim) = (xs.len(), xs[0].len());
        let x_mean = DVector::from_fn(dim, |j, _| xs.iter().map(|x| x[j]).sum::<f64>() / m as f64);
        let y_mean = [
            ys.iter().map(|y| y[0]).sum::<f64>() / m as f64,
            ys.iter().map(|y| y[1]).sum::<f64>() / m as f64,
        ];
        let xc = DMatrix::from_fn(m, dim, |i, j| xs[i][j] - x_mean[j]);
        let yc = DMatrix::from_fn(m, 2, |i, j| ys[i][j] - y_mean[j]);
        let svd = xc.svd(true, true);
        let tol = svd.singular_values.max() * 1e-12 * (m.max(dim) as f64);
        let w = svd.solve(&yc, tol).map_err(|e| ClmdsError::Degenerate(e.to_string()))?;
        Ok(Self { w, x_mean, y_mean })
    }

    fn apply(&self, x: &[f64]) -> Point2 {
        let mut out = self.y_mean;
        for (j, &v) in x.iter().enumerate() {
            let c = v - self.x_mean[j];
            out[0] += self.w[(j, 0)] * c;
            out[1] += self.w[(j, 1)] * c;
        }
        out
    }
}

fn estimate_with(prep: &Prepared, sparse_result: &ClmdsResult, sel: &SparseSelection) -> Result<ClmdsResult> {
    let n = prep.fs.len();
    if sparse_result.len() != sel.sparse.len() {
        return Err(ClmdsError::InvalidSparse(format!(
            "sparse result has {} rows for {} sparse points",
            sparse_result.len(),
            sel.sparse.len()
        )));
    }
    if sel.sparse.len() + sel.complement.len() != n {
        return Err(ClmdsError::InvalidSparse("selection does not cover the feature set".into()));
    }
    let to_orig = |row: usize| sel.sparse[row];
    let finest = &sparse_result.clustering;
    let k = finest.n_clusters();
    let medoids: Vec<usize> = finest.medoids().iter().map(|&r| to_orig(r)).collect();

    // 7.1 nearest medoid
    let extension: Vec<usize> = sel
        .complement
        .par_iter()
        .map(|&i| {
            let mut best = (0, f64::INFINITY);
            for (c, &m) in medoids.iter().enumerate() {
                let dist = prep.distance(i, m);
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            best.0
        })
        .collect();

    // 7.2 descriptor -> local affine per cluster
    let sparse_members = finest.members();
    let maps: Vec<Option<DescriptorMap>> = sparse_members
        .par_iter()
        .map(|rows| {
            if rows.len() < 3 {
                return Ok(None);
            }
            let xs: Vec<&[f64]> = rows.iter().map(|&r| prep.fs.row(to_orig(r))).collect();
            let ys: Vec<Point2> = rows.iter().map(|&r| sparse_result.local_coords[r]).collect();
            DescriptorMap::fit(&xs, &ys).map(Some)
        })
        .collect::<Result<_>>()?;
    let mean_local: Vec<Point2> = sparse_members
        .iter()
        .map(|rows| {
            let m = rows.len() as f64;
            [
                rows.iter().map(|&r| sparse_result.local_coords[r][0]).sum::<f64>() / m,
                rows.iter().map(|&r| sparse_result.local_coords[r][1]).sum::<f64>() / m,
            ]
        })
        .collect();

    // 7.3 compose with the cluster transforms
    let mut coords = vec![[0.0; 2]; n];
    let mut local_coords = vec![[0.0; 2]; n];
    let mut assignment = vec![0usize; n];
    let mut estimated_mask = vec![false; n];
    for (row, &i) in sel.sparse.iter().enumerate() {
        coords[i] = sparse_result.coords[row];
        local_coords[i] = sparse_result.local_coords[row];
        assignment[i] = finest.cluster_of(row);
    }
    let mut fallback = vec![false; k];
    for (&i, &c) in sel.complement.iter().zip(&extension) {
        assignment[i] = c;
        estimated_mask[i] = true;
        let t = &sparse_result.cluster_transforms[c];
        let estimate = maps[c].as_ref().map(|m| m.apply(prep.fs.row(i)));
        let placed = estimate.and_then(|y| {
            let [u, v, w] = t.apply_homogeneous(y);
            (w > MIN_W).then_some(([u / w, v / w], y))
        });
        let (p, y) = match placed {
            Some(hit) => hit,
            None => {
                fallback[c] = true;
                let y = mean_local[c];
                (t.apply_point(y)?, y)
            }
        };
        coords[i] = p;
        local_coords[i] = y;
    }

    let clustering = Clustering::new(assignment, medoids)?;
    // every level's clustering extends through the finest assignment
    let mut finest_to_level: Vec<usize> = (0..k).collect();
    let per_level = sparse_result
        .per_level
        .iter()
        .map(|level| {
            let level_assignment: Vec<usize> =
                clustering.assignment().iter().map(|&c| finest_to_level[c]).collect();
            let level_medoids = level.clustering.medoids().iter().map(|&r| to_orig(r)).collect();
            let out = LevelResult {
                clustering: Clustering::new(level_assignment, level_medoids)?,
                parent: level.parent.clone(),
                anchors: level.anchors.iter().map(|a| a.iter().map(|&r| to_orig(r)).collect()).collect(),
                anchor_coords: level.anchor_coords.clone(),
                transforms: level.transforms.clone(),
                residues: level.residues.clone(),
                group_stress: level.group_stress.clone(),
            };
            for c in finest_to_level.iter_mut() {
                *c = level.parent[*c];
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(ClmdsResult {
        coords,
        clustering,
        per_level,
        local_coords,
        cluster_transforms: sparse_result.cluster_transforms.clone(),
        local_stress: sparse_result.local_stress.clone(),
        incoherence: sparse_result.incoherence,
        sparse_indices: sel.sparse.clone(),
        estimated_mask,
        fallback_clusters: (0..k).filter(|&c| fallback[c]).collect(),
        estimation_unavailable: false,
    })
}

/// Plain MDS of all points with uniform weights, the reference embedding.
pub fn plain_mds(d: &DistanceMatrix, cfg: &MdsConfig) -> Result<Vec<Point2>> {
    Ok(mds_embed(d, &WeightSpec::Uniform(1.0), cfg)?.coords)
}
