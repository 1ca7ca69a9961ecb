//! Anchor selection: up to four points per cluster spanning the tetrahedron of
//! largest volume, with volumes taken from distances via the Cayley–Menger
//! determinant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Clustering, DistanceMatrix};
use crate::error::{ClmdsError, Result};

/// Clusters larger than this are thinned to their far points before the
/// exhaustive tetrahedron search.
pub const MAX_EXHAUSTIVE: usize = 70;

/// Percentile rank applied to clusters with at most `max_size` members
/// (any size when `None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercentileRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_size: Option<usize>,
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    /// Rules for clusters above [`MAX_EXHAUSTIVE`], checked in order; the last
    /// rule also covers anything larger than its `max_size`.
    pub percentile_ranks: Vec<PercentileRule>,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            percentile_ranks: vec![
                PercentileRule { max_size: Some(1000), percentile: 80.0 },
                PercentileRule { max_size: None, percentile: 95.0 },
            ],
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.percentile_ranks.is_empty() {
            return Err(ClmdsError::InvalidConfig("percentile_ranks is empty".into()));
        }
        for r in &self.percentile_ranks {
            if !(0.0..=100.0).contains(&r.percentile) {
                return Err(ClmdsError::InvalidConfig(format!(
                    "percentile {} outside [0, 100]",
                    r.percentile
                )));
            }
        }
        Ok(())
    }

    pub fn percentile_for(&self, cluster_size: usize) -> f64 {
        self.percentile_ranks
            .iter()
            .find(|r| r.max_size.is_none_or(|m| cluster_size <= m))
            .or(self.percentile_ranks.last())
            .map_or(0.0, |r| r.percentile)
    }
}

/// Anchor indices per cluster, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub per_cluster: Vec<Vec<usize>>,
}

impl AnchorSet {
    pub fn all(&self) -> Vec<usize> {
        self.per_cluster.iter().flatten().copied().collect()
    }
}

/// Determinant of a 5x5 matrix by Gaussian elimination with partial pivoting.
fn det5(mut m: [[f64; 5]; 5]) -> f64 {
    let mut det = 1.0;
    for col in 0..5 {
        let pivot = (col..5)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty range");
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col];
        det *= p;
        for row in col + 1..5 {
            let f = m[row][col] / p;
            if f != 0.0 {
                for k in col..5 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    det
}

#[inline]
fn volume_sq_unchecked(d4: &[[f64; 4]; 4]) -> f64 {
    let mut cm = [[1.0; 5]; 5];
    cm[0][0] = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            cm[i + 1][j + 1] = d4[i][j] * d4[i][j];
        }
    }
    det5(cm) / 288.0
}

/// Squared volume of the tetrahedron with pairwise distances `d4`.
///
/// The bordered Cayley–Menger determinant over squared distances, divided by
/// `2^3 (3!)^2`. Non-Euclidean dissimilarities can give a slightly negative
/// value; callers clamp.
pub fn simplex_volume_sq(d4: &[[f64; 4]; 4]) -> Result<f64> {
    for i in 0..4 {
        if d4[i][i] != 0.0 {
            return Err(ClmdsError::NonZeroDiagonal { index: i, value: d4[i][i] });
        }
        for j in 0..4 {
            let v = d4[i][j];
            if !v.is_finite() {
                return Err(ClmdsError::NonFinite { row: i, col: j });
            }
            if v < 0.0 {
                return Err(ClmdsError::Negative { row: i, col: j, value: v });
            }
            let asym = (v - d4[j][i]).abs();
            if asym > 1e-9 * v.max(1.0) {
                return Err(ClmdsError::Asymmetric { row: i, col: j, asymmetry: asym });
            }
        }
    }
    Ok(volume_sq_unchecked(d4))
}

fn quad(d: &DistanceMatrix, v: [usize; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            out[a][b] = d.get(v[a], v[b]);
        }
    }
    out
}

/// Squared area of a triangle from its side lengths.
fn triangle_area_sq(a: f64, b: f64, c: f64) -> f64 {
    let (a2, b2, c2) = (a * a, b * b, c * c);
    ((2.0 * (a2 * b2 + b2 * c2 + c2 * a2) - (a2 * a2 + b2 * b2 + c2 * c2)) / 16.0).max(0.0)
}

/// Value at percentile `p` of `values` with linear interpolation between ranks.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tetrahedron vertex candidates for one cluster.
///
/// Small clusters keep every member. Larger ones keep members at or beyond the
/// percentile distance to the medoid, relaxing the cut when fewer than four
/// would survive.
pub fn candidate_vertices(
    d: &DistanceMatrix,
    cluster: &[usize],
    medoid: usize,
    cfg: &AnchorConfig,
) -> Vec<usize> {
    let mut members = cluster.to_vec();
    members.sort_unstable();
    if members.len() <= MAX_EXHAUSTIVE {
        return members;
    }
    let dists: Vec<f64> = members.iter().map(|&i| d.get(i, medoid)).collect();
    let mut cut = percentile(&dists, cfg.percentile_for(members.len()));
    if dists.iter().filter(|&&x| x >= cut).count() < 4 {
        let mut desc = dists.clone();
        desc.sort_by(|a, b| b.total_cmp(a));
        cut = desc[3];
    }
    members.into_iter().zip(dists).filter(|&(_, x)| x >= cut).map(|(i, _)| i).collect()
}

/// Lexicographically first 4-subset of `cands` (ascending) with the largest
/// squared volume, clamped at zero.
pub fn max_volume_quadruple(d: &DistanceMatrix, cands: &[usize]) -> ([usize; 4], f64) {
    let m = cands.len();
    assert!(m >= 4, "need at least four candidates");
    let best_from = |a: usize| {
        let mut best: Option<([usize; 4], f64)> = None;
        for b in a + 1..m {
            for c in b + 1..m {
                for e in c + 1..m {
                    let v = [cands[a], cands[b], cands[c], cands[e]];
                    let vol = volume_sq_unchecked(&quad(d, v)).max(0.0);
                    if best.is_none_or(|(_, bv)| vol > bv) {
                        best = Some((v, vol));
                    }
                }
            }
        }
        best
    };
    let per_first: Vec<Option<([usize; 4], f64)>> = (0..m - 3).into_par_iter().map(best_from).collect();
    let mut best = per_first[0].expect("first slot non-empty");
    for cand in per_first.into_iter().skip(1).flatten() {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Four well-spread points when every tetrahedron is flat: the largest
/// triangle (or the diameter pair if all are collinear), then farthest points.
fn flat_fallback(d: &DistanceMatrix, cands: &[usize]) -> [usize; 4] {
    let m = cands.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(4);
    let mut best_tri = (0.0, [0, 0, 0]);
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let (i, j, k) = (cands[a], cands[b], cands[c]);
                let area = triangle_area_sq(d.get(i, j), d.get(j, k), d.get(i, k));
                if area > best_tri.0 {
                    best_tri = (area, [i, j, k]);
                }
            }
        }
    }
    let scale = cands.iter().flat_map(|&i| cands.iter().map(move |&j| (i, j))).map(|(i, j)| d.get(i, j)).fold(0.0, f64::max);
    if best_tri.0 > 1e-12 * scale.powi(4) {
        chosen.extend(best_tri.1);
    } else {
        let mut pair = (cands[0], cands[1]);
        let mut far = -1.0;
        for a in 0..m {
            for b in a + 1..m {
                if d.get(cands[a], cands[b]) > far {
                    far = d.get(cands[a], cands[b]);
                    pair = (cands[a], cands[b]);
                }
            }
        }
        chosen.extend([pair.0, pair.1]);
    }
    while chosen.len() < 4 {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &p in cands {
            if chosen.contains(&p) {
                continue;
            }
            let score: f64 = chosen.iter().map(|&q| d.get(p, q)).fold(f64::INFINITY, f64::min);
            if score > best.0 {
                best = (score, p);
            }
        }
        chosen.push(best.1);
    }
    let mut out = [chosen[0], chosen[1], chosen[2], chosen[3]];
    out.sort_unstable();
    out
}

/// Anchors of one cluster, ascending.
pub fn cluster_anchors(d: &DistanceMatrix, cluster: &[usize], medoid: usize, cfg: &AnchorConfig) -> Vec<usize> {
    let mut members = cluster.to_vec();
    members.sort_unstable();
    if members.len() <= 4 {
        return members;
    }
    let cands = candidate_vertices(d, &members, medoid, cfg);
    let (best, vol) = max_volume_quadruple(d, &cands);
    let scale = cands.iter().map(|&i| d.get(i, medoid)).fold(0.0, f64::max) * 2.0;
    if scale > 0.0 && vol <= 1e-12 * scale.powi(6) {
        return flat_fallback(d, &cands).to_vec();
    }
    best.to_vec()
}

/// Anchors for every cluster of `c`.
pub fn select_anchors(d: &DistanceMatrix, c: &Clustering, cfg: &AnchorConfig) -> Result<AnchorSet> {
    cfg.validate()?;
    let members = c.members();
    let per_cluster = members
        .par_iter()
        .zip(c.medoids().par_iter())
        .map(|(m, &med)| cluster_anchors(d, m, med, cfg))
        .collect();
    Ok(AnchorSet { per_cluster })
}
