//! Local-to-global maps for one cluster: pathology checks on the anchor
//! quadrilaterals, affine least-squares fits, and homographies built from
//! canonical quadrilaterals and a linear fractional transformation.

use serde::{Deserialize, Serialize};

use crate::data::Point2;
use crate::error::{ClmdsError, Result};

/// Homogeneous coordinates with `|w|` below this are treated as points at infinity.
pub const MIN_W: f64 = 1e-12;
/// Relative cross-product magnitude below which three points count as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-9;
/// Residue margin within which the affine candidate wins.
pub const RESIDUE_TIE: f64 = 1e-12;

type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Affine,
    Homography,
}

/// A 3x3 operator on homogeneous plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2D {
    pub kind: TransformKind,
    pub matrix: Mat3,
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inverse3(m: &Mat3) -> Option<Mat3> {
    let det = det3(m);
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !det.is_finite() || det.abs() <= 1e-14 * scale.powi(3) || scale == 0.0 {
        return None;
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    Some(adj.map(|row| row.map(|v| v / det)))
}

impl Transform2D {
    pub fn identity() -> Self {
        Self::affine([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    }

    /// `p -> linear * p + offset`.
    pub fn affine(linear: [[f64; 2]; 2], offset: [f64; 2]) -> Self {
        Self {
            kind: TransformKind::Affine,
            matrix: [
                [linear[0][0], linear[0][1], offset[0]],
                [linear[1][0], linear[1][1], offset[1]],
                [0.0, 0.0, 1.0],
            ],
        }
    }

    pub fn translation(offset: [f64; 2]) -> Self {
        Self::affine([[1.0, 0.0], [0.0, 1.0]], offset)
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.matrix)
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Transform2D) -> Transform2D {
        let kind = if self.kind == TransformKind::Affine && inner.kind == TransformKind::Affine {
            TransformKind::Affine
        } else {
            TransformKind::Homography
        };
        Transform2D { kind, matrix: mat_mul(&self.matrix, &inner.matrix) }
    }

    /// Homogeneous image `(u, v, w)` of `p`.
    pub fn apply_homogeneous(&self, p: Point2) -> [f64; 3] {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2],
        ]
    }

    /// Image of `p` after the perspective divide.
    pub fn apply_point(&self, p: Point2) -> Result<Point2> {
        let [u, v, w] = self.apply_homogeneous(p);
        if self.kind == TransformKind::Affine {
            return Ok([u, v]);
        }
        if !(w.abs() >= MIN_W) {
            return Err(ClmdsError::PointAtInfinity { w });
        }
        Ok([u / w, v / w])
    }
}

/// Applies `t` to every point, failing on any point at infinity.
pub fn apply_transform(t: &Transform2D, points: &[Point2]) -> Result<Vec<Point2>> {
    points.iter().map(|&p| t.apply_point(p)).collect()
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn bbox_scale(points: &[Point2]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (hi[0] - lo[0]).max(hi[1] - lo[1])
}

/// Strictly convex hull in counter-clockwise order (monotone chain), starting
/// from the lowest point in `(x, y)` order. Collinear input gives its two
/// extremes; coincident input gives a single index.
pub fn convex_hull_2d(points: &[Point2]) -> Result<Vec<usize>> {
    if points.len() < 3 {
        return Err(ClmdsError::Degenerate(format!("convex hull needs 3 points, got {}", points.len())));
    }
    let tol = COLLINEAR_TOLERANCE * bbox_scale(points).powi(2);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() == 1 {
        return Ok(order);
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let seq: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(order.iter()) } else { Box::new(order.iter().rev()) };
        for &i in seq {
            while hull.len() >= start + 2
                && cross(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= tol
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 2 {
        // every point within tolerance of the first: keep the extremes
        return Ok(vec![order[0], *order.last().expect("non-empty")]);
    }
    Ok(hull)
}

/// Which map to fit for a cluster and on which anchors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformPlan {
    pub kind: TransformKind,
    /// Positions into the anchor list. For a homography these follow the
    /// counter-clockwise local hull starting at position 0.
    pub anchors: Vec<usize>,
}

/// Whether `quad` (in the given order) is a strictly convex quadrilateral of
/// either orientation.
fn convex_in_order(quad: &[Point2]) -> bool {
    let tol = COLLINEAR_TOLERANCE * bbox_scale(quad).powi(2);
    let turns: Vec<f64> = (0..4).map(|i| cross(quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4])).collect();
    turns.iter().all(|&c| c > tol) || turns.iter().all(|&c| c < -tol)
}

/// Pathology check on the anchors shared by the local and global frames.
pub fn classify_transform(local: &[Point2], global: &[Point2]) -> Result<TransformPlan> {
    if local.len() != global.len() || local.is_empty() || local.len() > 4 {
        return Err(ClmdsError::InvalidConfig(format!(
            "anchor lists of lengths {} and {}",
            local.len(),
            global.len()
        )));
    }
    let all: Vec<usize> = (0..local.len()).collect();
    if local.len() < 4 {
        return Ok(TransformPlan { kind: TransformKind::Affine, anchors: all });
    }
    let hull = convex_hull_2d(local)?;
    if hull.len() < 4 {
        let mut anchors = hull;
        anchors.sort_unstable();
        return Ok(TransformPlan { kind: TransformKind::Affine, anchors });
    }
    let start = hull.iter().position(|&i| i == 0).expect("all four points on the hull");
    let ordered: Vec<usize> = (0..4).map(|k| hull[(start + k) % 4]).collect();
    let global_quad: Vec<Point2> = ordered.iter().map(|&i| global[i]).collect();
    if convex_hull_2d(global)?.len() < 4 || !convex_in_order(&global_quad) {
        return Ok(TransformPlan { kind: TransformKind::Affine, anchors: all });
    }
    Ok(TransformPlan { kind: TransformKind::Homography, anchors: ordered })
}

fn mean(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    [points.iter().map(|p| p[0]).sum::<f64>() / n, points.iter().map(|p| p[1]).sum::<f64>() / n]
}

/// Least-squares affine map taking `src` onto `dst`.
pub fn fit_affine(src: &[Point2], dst: &[Point2]) -> Result<Transform2D> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(ClmdsError::Degenerate(format!("affine fit needs >= 3 pairs, got {}", src.len())));
    }
    let (ms, md) = (mean(src), mean(dst));
    // centred scatter S = sum s s' and cross-covariance C = sum d s'
    let mut s = [[0.0; 2]; 2];
    let mut c = [[0.0; 2]; 2];
    for (p, q) in src.iter().zip(dst) {
        let a = [p[0] - ms[0], p[1] - ms[1]];
        let b = [q[0] - md[0], q[1] - md[1]];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += a[i] * a[j];
                c[i][j] += b[i] * a[j];
            }
        }
    }
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let trace = s[0][0] + s[1][1];
    if !(det > COLLINEAR_TOLERANCE * trace * trace) {
        return Err(ClmdsError::Degenerate("affine source points are collinear".into()));
    }
    let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
    let mut linear = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            linear[i][j] = c[i][0] * inv[0][j] + c[i][1] * inv[1][j];
        }
    }
    let offset = [
        md[0] - linear[0][0] * ms[0] - linear[0][1] * ms[1],
        md[1] - linear[1][0] * ms[0] - linear[1][1] * ms[1],
    ];
    Ok(Transform2D::affine(linear, offset))
}

/// Least-squares similarity (rotation or reflection, uniform scale,
/// translation). Exact for two distinct points; a pure translation when the
/// source points coincide.
pub fn fit_similarity(src: &[Point2], dst: &[Point2]) -> Result<Transform2D> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(ClmdsError::Degenerate("similarity fit needs matching non-empty lists".into()));
    }
    let (ms, md) = (mean(src), mean(dst));
    let (mut sxx, mut proper, mut improper) = (0.0, [0.0; 2], [0.0; 2]);
    for (p, q) in src.iter().zip(dst) {
        let (ax, ay) = (p[0] - ms[0], p[1] - ms[1]);
        let (bx, by) = (q[0] - md[0], q[1] - md[1]);
        sxx += ax * ax + ay * ay;
        // b ≈ z a (proper) or z conj(a) (improper), z complex
        proper[0] += bx * ax + by * ay;
        proper[1] += by * ax - bx * ay;
        improper[0] += bx * ax - by * ay;
        improper[1] += by * ax + bx * ay;
    }
    if sxx <= 0.0 {
        return Ok(Transform2D::translation([md[0] - ms[0], md[1] - ms[1]]));
    }
    let np = proper[0].hypot(proper[1]);
    let ni = improper[0].hypot(improper[1]);
    let linear = if ni > np * (1.0 + 1e-12) {
        let (x, y) = (improper[0] / sxx, improper[1] / sxx);
        [[x, y], [y, -x]]
    } else {
        let (x, y) = (proper[0] / sxx, proper[1] / sxx);
        [[x, -y], [y, x]]
    };
    let t = Transform2D::affine(linear, [0.0, 0.0]);
    if t.determinant().abs() <= MIN_W {
        return Ok(Transform2D::translation([md[0] - ms[0], md[1] - ms[1]]));
    }
    let offset = [
        md[0] - linear[0][0] * ms[0] - linear[0][1] * ms[1],
        md[1] - linear[1][0] * ms[0] - linear[1][1] * ms[1],
    ];
    Ok(Transform2D::affine(linear, offset))
}

/// Exact affine sending `q[0], q[1], q[2]` to `(1,0), (0,0), (0,1)`.
fn canonical_affine(q: &[Point2]) -> Result<Mat3> {
    let u = [q[0][0] - q[1][0], q[0][1] - q[1][1]];
    let v = [q[2][0] - q[1][0], q[2][1] - q[1][1]];
    let det = u[0] * v[1] - v[0] * u[1];
    let scale = (u[0].abs() + u[1].abs() + v[0].abs() + v[1].abs()).powi(2);
    if !(det.abs() > COLLINEAR_TOLERANCE * scale) {
        return Err(ClmdsError::Degenerate("canonical triangle is collinear".into()));
    }
    // inverse of [u v]
    let m = [[v[1] / det, -v[0] / det], [-u[1] / det, u[0] / det]];
    Ok([
        [m[0][0], m[0][1], -(m[0][0] * q[1][0] + m[0][1] * q[1][1])],
        [m[1][0], m[1][1], -(m[1][0] * q[1][0] + m[1][1] * q[1][1])],
        [0.0, 0.0, 1.0],
    ])
}

fn affine_apply(m: &Mat3, p: Point2) -> Point2 {
    [m[0][0] * p[0] + m[0][1] * p[1] + m[0][2], m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]]
}

/// Projective map sending each vertex of `local_quad` onto the matching vertex
/// of `global_quad`.
///
/// Both quadrilaterals go to canonical form `{(1,0), (0,0), (0,1), (a,b)}`
/// by exact affines; a linear fractional map `F` then carries `(a,b)` to the
/// global fourth vertex `(c,d)`, giving `H = A_g^-1 F A_l`. `H` is scaled so
/// that `w` averages 1 over the local vertices.
pub fn fit_homography(local_quad: &[Point2; 4], global_quad: &[Point2; 4]) -> Result<Transform2D> {
    let al = canonical_affine(local_quad)?;
    let ag = canonical_affine(global_quad)?;
    let [a, b] = affine_apply(&al, local_quad[3]);
    let [c, d] = affine_apply(&ag, global_quad[3]);
    let s = a + b - 1.0;
    let t = c + d - 1.0;
    if !(s > 0.0 && t > 0.0 && a > 0.0 && b > 0.0 && c > 0.0 && d > 0.0) {
        return Err(ClmdsError::NonConvexCanonical { s, t });
    }
    let f = [
        [b * c * s, 0.0, 0.0],
        [0.0, a * d * s, 0.0],
        [b * (c * s - a * t), a * (d * s - b * t), a * b * t],
    ];
    let ag_inv = inverse3(&ag).ok_or_else(|| ClmdsError::Degenerate("singular global canonical map".into()))?;
    let mut h = mat_mul(&ag_inv, &mat_mul(&f, &al));
    let t_h = Transform2D { kind: TransformKind::Homography, matrix: h };
    let mean_w = local_quad.iter().map(|&p| t_h.apply_homogeneous(p)[2]).sum::<f64>() / 4.0;
    if !(mean_w.abs() > 0.0) || inverse3(&h).is_none() {
        return Err(ClmdsError::Degenerate("singular homography".into()));
    }
    for row in &mut h {
        for v in row.iter_mut() {
            *v /= mean_w;
        }
    }
    Ok(Transform2D { kind: TransformKind::Homography, matrix: h })
}

/// Sum of squared distances between `targets` and the images of `sources`.
pub fn residue(t: &Transform2D, sources: &[Point2], targets: &[Point2]) -> f64 {
    sources
        .iter()
        .zip(targets)
        .map(|(&p, q)| match t.apply_point(p) {
            Ok(r) => (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2),
            Err(_) => f64::INFINITY,
        })
        .sum()
}

/// Transform chosen for one cluster and the cluster's mapped points.
#[derive(Debug, Clone, PartialEq)]
pub struct Stitch {
    pub transform: Transform2D,
    pub mapped: Vec<Point2>,
    pub residue: f64,
}

/// Affine fit on the planned anchors, degrading to a similarity for one, two,
/// or collinear anchors.
fn fit_planned_affine(src: &[Point2], dst: &[Point2]) -> Result<Transform2D> {
    match src.len() {
        0 => Err(ClmdsError::Degenerate("no anchors".into())),
        1 => Ok(Transform2D::translation([dst[0][0] - src[0][0], dst[0][1] - src[0][1]])),
        2 => fit_similarity(src, dst),
        _ => match fit_affine(src, dst) {
            Ok(t) if t.determinant().abs() > MIN_W => Ok(t),
            _ => fit_similarity(src, dst),
        },
    }
}

/// Maps a cluster's local points with the plan's transform, comparing a
/// planned homography with the four-anchor affine and keeping the lower
/// residue. Affine wins ties and any case where the homography would send a
/// cluster point to or across the line at infinity.
pub fn choose_best_transform(
    cluster_local: &[Point2],
    anchors_local: &[Point2],
    anchors_global: &[Point2],
    plan: &TransformPlan,
) -> Result<Stitch> {
    let src: Vec<Point2> = plan.anchors.iter().map(|&i| anchors_local[i]).collect();
    let dst: Vec<Point2> = plan.anchors.iter().map(|&i| anchors_global[i]).collect();
    let affine_outcome = |src: &[Point2], dst: &[Point2]| -> Result<Stitch> {
        let transform = fit_planned_affine(src, dst)?;
        let mapped = apply_transform(&transform, cluster_local)?;
        Ok(Stitch { residue: residue(&transform, src, dst), transform, mapped })
    };
    if plan.kind == TransformKind::Affine {
        return affine_outcome(&src, &dst);
    }
    let affine = affine_outcome(anchors_local, anchors_global)?;
    let lq = [src[0], src[1], src[2], src[3]];
    let gq = [dst[0], dst[1], dst[2], dst[3]];
    let Ok(h) = fit_homography(&lq, &gq) else {
        return Ok(affine);
    };
    let rh = residue(&h, anchors_local, anchors_global);
    if !(rh < affine.residue - RESIDUE_TIE) {
        return Ok(affine);
    }
    // anchors have w > 0 after normalisation; a member with w <= MIN_W lies on
    // or beyond the horizon
    let mut mapped = Vec::with_capacity(cluster_local.len());
    for &p in cluster_local {
        let [u, v, w] = h.apply_homogeneous(p);
        if !(w > MIN_W) {
            return Ok(affine);
        }
        mapped.push([u / w, v / w]);
    }
    Ok(Stitch { transform: h, mapped, residue: rh })
}
