//! Object extraction from a cropped point cloud: ground removal, DBSCAN,
//! and selection of the cluster that continues the previous UAV cluster.

use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMethod {
    ZThreshold,
    PlaneRansac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundParams {
    pub method: GroundMethod,
    /// Points with `z <= z_cut` are ground in threshold mode.
    pub z_cut: f64,
    pub ransac_iters: usize,
    pub inlier_tol: f64,
    /// Smallest inlier set accepted as a ground plane.
    pub min_inliers: usize,
    /// Largest angle between the plane normal and +z, degrees.
    pub max_tilt_deg: f64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            method: GroundMethod::ZThreshold,
            z_cut: -0.85,
            ransac_iters: 200,
            inlier_tol: 0.05,
            min_inliers: 10,
            max_tilt_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssocParams {
    /// Allowed `|count - prev| / prev`.
    pub max_count_ratio_dev: f64,
    /// Allowed `|range - prev_range|`, meters.
    pub max_range_dev: f64,
}

impl Default for AssocParams {
    fn default() -> Self {
        Self {
            max_count_ratio_dev: 0.6,
            max_range_dev: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
    pub ground: GroundParams,
    pub assoc: AssocParams,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            eps: 0.35,
            min_pts: 3,
            ground: GroundParams::default(),
            assoc: AssocParams::default(),
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.min_pts == 0 {
            return Err(invalid("dbscan needs eps > 0 and min_pts >= 1"));
        }
        let g = &self.ground;
        if !(g.inlier_tol > 0.0) || g.ransac_iters == 0 || !(g.max_tilt_deg > 0.0) {
            return Err(invalid("ground removal tolerances must be positive"));
        }
        let a = &self.assoc;
        if !(a.max_count_ratio_dev > 0.0 && a.max_range_dev > 0.0) {
            return Err(invalid("association tolerances must be positive"));
        }
        Ok(())
    }
}

/// A labeled subset of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Member indices into the clustered slice, ascending.
    pub indices: Vec<usize>,
    pub centroid: Point3,
    pub count: usize,
    /// Centroid distance to the sensor.
    pub range: f64,
}

impl Cluster {
    pub fn from_indices(points: &[Point3], mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        let n = indices.len() as f64;
        let sum = indices.iter().fold(Point3::ORIGIN, |acc, &i| acc + points[i]);
        let centroid = sum * (1.0 / n);
        Self {
            count: indices.len(),
            range: centroid.range(),
            centroid,
            indices,
        }
    }
}

/// Result of matching clusters against the previous UAV cluster.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionOutcome {
    pub cluster: Option<Cluster>,
}

impl SelectionOutcome {
    /// 1 when a cluster was accepted, 0 otherwise.
    pub fn flag(&self) -> u8 {
        self.cluster.is_some() as u8
    }
}

/// Drops ground returns; survivors keep their input order.
pub fn ground_removal(points: &[Point3], params: &GroundParams) -> Vec<Point3> {
    let keep = ground_mask(points, params);
    points
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

/// `true` for every point that is not ground.
pub fn ground_mask(points: &[Point3], params: &GroundParams) -> Vec<bool> {
    match params.method {
        GroundMethod::ZThreshold => points.iter().map(|p| p.z > params.z_cut).collect(),
        GroundMethod::PlaneRansac => match fit_ground_plane(points, params) {
            Some((normal, offset)) => points
                .iter()
                .map(|p| (normal.dot(p) - offset).abs() > params.inlier_tol)
                .collect(),
            None => vec![true; points.len()],
        },
    }
}

/// Dominant near-horizontal plane as `(unit normal, offset)` with
/// `normal . p = offset`, or `None` when no plane qualifies.
pub fn fit_ground_plane(points: &[Point3], params: &GroundParams) -> Option<(Point3, f64)> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let min_cos = params.max_tilt_deg.to_radians().cos();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6A0D_u64 ^ n as u64);
    let count_inliers = |normal: &Point3, offset: f64| {
        points
            .iter()
            .filter(|p| (normal.dot(p) - offset).abs() <= params.inlier_tol)
            .count()
    };

    let mut best: Option<(Point3, f64, usize)> = None;
    for _ in 0..params.ransac_iters {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let c = rng.random_range(0..n);
        if a == b || b == c || a == c {
            continue;
        }
        let normal = (points[b] - points[a]).cross(&(points[c] - points[a]));
        let len = normal.norm();
        if len < 1e-12 {
            continue;
        }
        let mut normal = normal * (1.0 / len);
        if normal.z < 0.0 {
            normal = normal * -1.0;
        }
        if normal.z < min_cos {
            continue;
        }
        let offset = normal.dot(&points[a]);
        let inliers = count_inliers(&normal, offset);
        if best.is_none_or(|(_, _, k)| inliers > k) {
            best = Some((normal, offset, inliers));
        }
    }
    let (mut normal, mut offset, mut inliers) = best?;

    // least-squares refit of z = a x + b y + c on the inliers
    let members: Vec<&Point3> = points
        .iter()
        .filter(|p| (normal.dot(p) - offset).abs() <= params.inlier_tol)
        .collect();
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for p in &members {
        let row = Vector3::new(p.x, p.y, 1.0);
        ata += row * row.transpose();
        atb += row * p.z;
    }
    if let Some(sol) = ata.try_inverse().map(|inv| inv * atb) {
        let refined = Point3::new(-sol[0], -sol[1], 1.0);
        let len = refined.norm();
        let refined = refined * (1.0 / len);
        let refined_offset = sol[2] / len;
        let k = count_inliers(&refined, refined_offset);
        if refined.z >= min_cos && k >= inliers {
            normal = refined;
            offset = refined_offset;
            inliers = k;
        }
    }
    (inliers >= params.min_inliers.max(3)).then_some((normal, offset))
}

/// Uniform hash grid with cell edge `eps` for fixed-radius neighbor queries.
struct NeighborGrid<'a> {
    points: &'a [Point3],
    eps: f64,
    eps2: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> NeighborGrid<'a> {
    fn new(points: &'a [Point3], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self {
            points,
            eps,
            eps2: eps * eps,
            cells,
        }
    }

    fn key(p: &Point3, eps: f64) -> (i64, i64, i64) {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    }

    /// Calls `f` for every point within `eps` of point `i`, itself included.
    /// Stops early when `f` returns `false`.
    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize) -> bool) {
        let p = &self.points[i];
        let (kx, ky, kz) = Self::key(p, self.eps);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(cell) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &j in cell {
                        if p.distance_squared(&self.points[j]) <= self.eps2 && !f(j) {
                            return;
                        }
                    }
                }
            }
        }
    }
}

/// Density-based clustering, Euclidean metric, noise discarded.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are the connected components of core points,
/// numbered by their lowest core index. Each non-core point within `eps` of
/// some core point joins the cluster of the lowest-indexed such core point.
pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Vec<Cluster> {
    let n = points.len();
    if n == 0 || !(eps > 0.0) || min_pts == 0 {
        return Vec::new();
    }
    let grid = NeighborGrid::new(points, eps);

    let core: Vec<bool> = (0..n)
        .map(|i| {
            let mut count = 0;
            grid.for_each_neighbor(i, |_| {
                count += 1;
                count < min_pts
            });
            count >= min_pts
        })
        .collect();

    const UNSET: usize = usize::MAX;
    let mut label = vec![UNSET; n];
    let mut n_clusters = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || label[seed] != UNSET {
            continue;
        }
        label[seed] = n_clusters;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            grid.for_each_neighbor(i, |j| {
                if core[j] && label[j] == UNSET {
                    label[j] = n_clusters;
                    queue.push_back(j);
                }
                true
            });
        }
        n_clusters += 1;
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut owner = UNSET;
        grid.for_each_neighbor(i, |j| {
            if core[j] && j < owner {
                owner = j;
            }
            true
        });
        if owner != UNSET {
            label[i] = label[owner];
        }
    }

    let mut members = vec![Vec::new(); n_clusters];
    for (i, &l) in label.iter().enumerate() {
        if l != UNSET {
            members[l].push(i);
        }
    }
    members
        .into_iter()
        .map(|idx| Cluster::from_indices(points, idx))
        .collect()
}

/// Picks the cluster continuing the previous UAV cluster.
///
/// Clusters whose point count deviates from `prev_count` by more than the
/// allowed ratio are dropped; of the rest, the one whose range is closest to
/// `prev_range` wins (ties: closer count, then lower first index) and is
/// accepted only if that range difference is within tolerance.
pub fn select_cluster(
    clusters: &[Cluster],
    prev_count: usize,
    prev_range: f64,
    assoc: &AssocParams,
) -> SelectionOutcome {
    let prev = prev_count.max(1) as f64;
    let best = clusters
        .iter()
        .filter(|c| (c.count as f64 - prev).abs() / prev <= assoc.max_count_ratio_dev)
        .min_by(|a, b| {
            let ra = (a.range - prev_range).abs();
            let rb = (b.range - prev_range).abs();
            ra.total_cmp(&rb)
                .then((a.count as f64 - prev).abs().total_cmp(&(b.count as f64 - prev).abs()))
                .then(a.indices.first().cmp(&b.indices.first()))
        });
    match best {
        Some(c) if (c.range - prev_range).abs() <= assoc.max_range_dev => SelectionOutcome {
            cluster: Some(c.clone()),
        },
        _ => SelectionOutcome::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cluster_at(count: usize, range: f64, first: usize) -> Cluster {
        Cluster {
            indices: (first..first + count).collect(),
            centroid: Point3::new(range, 0.0, 0.0),
            count,
            range,
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(ground_removal(&[], &GroundParams::default()).is_empty());
        assert!(dbscan(&[], 0.3, 3).is_empty());
        let out = select_cluster(&[], 10, 2.0, &AssocParams::default());
        assert_eq!(out.flag(), 0);
        assert!(out.cluster.is_none());
    }

    #[test]
    fn ransac_strips_floor_and_keeps_object() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut pts = Vec::new();
        for _ in 0..500 {
            pts.push(Point3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                -1.0 + rng.random_range(-0.005..0.005),
            ));
        }
        let object: Vec<Point3> = (0..30)
            .map(|_| {
                Point3::new(
                    1.0 + rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    0.5 + rng.random_range(-0.1..0.1),
                )
            })
            .collect();
        pts.extend(&object);
        let params = GroundParams {
            method: GroundMethod::PlaneRansac,
            inlier_tol: 0.03,
            ..Default::default()
        };
        let out = ground_removal(&pts, &params);
        let floor_left = out.iter().filter(|p| p.z < -0.9).count();
        assert!(floor_left <= 5, "{floor_left} floor points survived");
        for p in &object {
            assert!(out.contains(p));
        }
    }

    #[test]
    fn ransac_ignores_walls() {
        // a vertical wall has no near-horizontal plane
        let pts: Vec<Point3> = (0..200)
            .map(|i| Point3::new(3.0, (i % 20) as f64 * 0.1, (i / 20) as f64 * 0.1))
            .collect();
        let params = GroundParams {
            method: GroundMethod::PlaneRansac,
            ..Default::default()
        };
        assert_eq!(ground_removal(&pts, &params), pts);
    }

    #[test]
    fn z_threshold_is_idempotent_and_order_preserving() {
        let pts = vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, -1.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, -0.85),
        ];
        let params = GroundParams::default();
        let once = ground_removal(&pts, &params);
        assert_eq!(once, vec![pts[0], pts[2]]);
        assert_eq!(ground_removal(&once, &params), once);
    }

    #[test]
    fn line_of_points_with_outlier() {
        let pts: Vec<Point3> = [0.0, 0.1, 0.2, 10.0].iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect();
        let clusters = dbscan(&pts, 0.5, 2);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].indices, vec![0, 1, 2]);
        assert!((clusters[0].centroid.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn two_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut pts = Vec::new();
        for center in [Point3::new(0.0, 0.0, 0.0), Point3::new(5.0, 0.0, 0.0)] {
            for _ in 0..40 {
                pts.push(center + Point3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)));
            }
        }
        let clusters = dbscan(&pts, 0.3, 3);
        assert_eq!(clusters.len(), 2);
        assert!(clusters.iter().all(|c| c.count == 40));
    }

    #[test]
    fn border_point_joins_lowest_core_neighbor() {
        // cores at both ends, index 4 is a border point between two clusters
        let xs = [0.0, 0.1, 2.0, 2.1, 1.05, 0.2, 1.9, 0.05, 1.95];
        let pts: Vec<Point3> = xs.iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect();
        let clusters = dbscan(&pts, 0.86, 4);
        assert_eq!(clusters.len(), 2);
        assert!(clusters[0].indices.contains(&4));
    }

    #[test]
    fn count_gate_then_range() {
        let assoc = AssocParams { max_count_ratio_dev: 0.5, max_range_dev: 0.5 };
        let cands = vec![cluster_at(48, 3.1, 0), cluster_at(100, 3.0, 100)];
        let out = select_cluster(&cands, 50, 3.0, &assoc);
        assert_eq!(out.flag(), 1);
        assert_eq!(out.cluster.unwrap().count, 48);
    }

    #[test]
    fn range_gate_rejects_far_candidate() {
        let assoc = AssocParams { max_count_ratio_dev: 0.5, max_range_dev: 0.5 };
        let out = select_cluster(&[cluster_at(50, 4.2, 0)], 50, 3.0, &assoc);
        assert_eq!(out.flag(), 0);
    }

    #[test]
    fn selection_ties_break_on_count_then_index() {
        let assoc = AssocParams::default();
        let cands = vec![cluster_at(12, 3.25, 10), cluster_at(10, 2.75, 20), cluster_at(11, 3.25, 5)];
        let out = select_cluster(&cands, 10, 3.0, &assoc);
        assert_eq!(out.cluster.unwrap().indices[0], 20);
        let cands = vec![cluster_at(10, 3.25, 10), cluster_at(10, 3.25, 5)];
        let out = select_cluster(&cands, 10, 3.0, &assoc);
        assert_eq!(out.cluster.unwrap().indices[0], 5);
    }

    #[test]
    fn accepted_only_when_both_gates_pass() {
        let assoc = AssocParams { max_count_ratio_dev: 0.5, max_range_dev: 0.5 };
        let counts = [1usize, 5, 10, 15, 20];
        let ranges = [1.0, 2.6, 3.0, 3.4, 5.0];
        for &c1 in &counts {
            for &r1 in &ranges {
                for &c2 in &counts {
                    for &r2 in &ranges {
                        let cands = vec![cluster_at(c1, r1, 0), cluster_at(c2, r2, 50)];
                        let out = select_cluster(&cands, 10, 3.0, &assoc);
                        if let Some(c) = out.cluster {
                            assert!((c.count as f64 - 10.0).abs() / 10.0 <= 0.5);
                            assert!((c.range - 3.0).abs() <= 0.5);
                        } else {
                            let ok = |c: usize, r: f64| (c as f64 - 10.0).abs() / 10.0 <= 0.5 && (r - 3.0f64).abs() <= 0.5;
                            // rejection means the range-closest count-passing cluster failed
                            let passing: Vec<f64> = [(c1, r1), (c2, r2)]
                                .iter()
                                .filter(|(c, _)| (*c as f64 - 10.0).abs() / 10.0 <= 0.5)
                                .map(|(_, r)| (r - 3.0f64).abs())
                                .collect();
                            let min = passing.iter().cloned().fold(f64::INFINITY, f64::min);
                            assert!(min > 0.5 || !ok(c1, r1) && !ok(c2, r2));
                        }
                    }
                }
            }
        }
    }
}
