//! Synthetic UAV flights and panoramic scan rendering.
//!
//! The static part of a scene (ground plane and clutter) is ray cast once per
//! sensor configuration; each frame then adds range noise, dropout, and the
//! UAV returns. The UAV is a body sphere plus two crossed arms; it returns a
//! distance-dependent number of points picked from its silhouette, which
//! reproduces the thinning of small targets with range.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::{PixelCoord, Point3, SensorIntrinsics};
use crate::scan::{ImageRoi, PanoramicScan, ScanTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Ellipse in the horizontal plane with a linear climb.
    Spiral,
    /// Ellipse in the horizontal plane at fixed height.
    Elliptical,
}

/// Parametric flight path. At `t = 0` the UAV sits at `center + (a, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// Horizontal center of the ellipse.
    pub center: [f64; 2],
    /// Semi-axes along x and y, meters.
    pub radii: [f64; 2],
    /// rad/s
    pub angular_rate: f64,
    /// m/s, spiral only.
    #[serde(default)]
    pub climb_rate: f64,
    /// Height at `t = 0`.
    pub z0: f64,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub sample_rate: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let finite = self.center.iter().chain(&self.radii).all(|v| v.is_finite())
            && self.angular_rate.is_finite()
            && self.climb_rate.is_finite()
            && self.z0.is_finite();
        if !finite {
            return Err(invalid("trajectory parameters must be finite"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("trajectory duration must be positive"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(invalid("trajectory sample_rate must be positive"));
        }
        if self.radii.iter().any(|&r| r <= 0.0) {
            return Err(invalid("trajectory radii must be positive"));
        }
        Ok(())
    }

    fn climb(&self) -> f64 {
        match self.kind {
            TrajectoryKind::Spiral => self.climb_rate,
            TrajectoryKind::Elliptical => 0.0,
        }
    }

    /// Analytic position and velocity at time `t`.
    pub fn sample_at(&self, t: f64) -> GroundTruthSample {
        let [cx, cy] = self.center;
        let [a, b] = self.radii;
        let w = self.angular_rate;
        let (s, c) = (w * t).sin_cos();
        let climb = self.climb();
        GroundTruthSample {
            t,
            position: Point3::new(cx + a * c, cy + b * s, self.z0 + climb * t),
            velocity: Point3::new(-a * w * s, b * w * c, climb),
        }
    }
}

/// Ground-truth pose of the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub t: f64,
    pub position: Point3,
    pub velocity: Point3,
}

/// Samples the trajectory at its sample rate over `[0, duration]`.
pub fn make_trajectory(spec: &TrajectorySpec) -> Result<Vec<GroundTruthSample>> {
    spec.validate()?;
    let n = (spec.duration * spec.sample_rate + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| spec.sample_at(i as f64 / spec.sample_rate))
        .collect())
}

/// Expected number of returns from the UAV at `range`: `round(k / r^2)`.
pub fn uav_point_count_model(range: f64, k: f64) -> usize {
    if !(range > 0.0) {
        return 0;
    }
    (k / (range * range)).round().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UavModel {
    /// Tip-to-tip length of each arm, meters.
    pub arm_span: f64,
    pub body_radius: f64,
    /// Square cross-section edge of the arms.
    pub arm_thickness: f64,
}

impl Default for UavModel {
    fn default() -> Self {
        Self {
            arm_span: 0.5,
            body_radius: 0.1,
            arm_thickness: 0.04,
        }
    }
}

impl UavModel {
    pub fn bounding_radius(&self) -> f64 {
        let h = self.arm_span / 2.0;
        let t = self.arm_thickness / 2.0;
        (h * h + 2.0 * t * t).sqrt().max(self.body_radius)
    }
}

/// Static scene object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Clutter {
    /// Axis-aligned box.
    Box { center: Point3, half_extents: Point3 },
    Sphere { center: Point3, radius: f64 },
}

impl Clutter {
    fn intersect(&self, dir: &Point3) -> Option<f64> {
        match self {
            Clutter::Box { center, half_extents } => {
                ray_box(dir, &(*center - *half_extents), &(*center + *half_extents))
            }
            Clutter::Sphere { center, radius } => ray_sphere(dir, center, *radius),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Range noise standard deviation along the ray, meters.
    pub range_sigma: f64,
    /// Probability that a return is lost.
    pub dropout_prob: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            range_sigma: 0.02,
            dropout_prob: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    /// Height of the floor in the sensor frame.
    pub ground_z: f64,
    pub uav: UavModel,
    pub clutter: Vec<Clutter>,
    pub noise: NoiseModel,
    /// Coefficient of the inverse-square point-count model.
    pub point_budget_k: f64,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            ground_z: -1.0,
            uav: UavModel::default(),
            clutter: Vec::new(),
            noise: NoiseModel::default(),
            point_budget_k: 300.0,
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise.range_sigma >= 0.0 && self.noise.range_sigma.is_finite()) {
            return Err(invalid("range_sigma must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.noise.dropout_prob) {
            return Err(invalid("dropout_prob must lie in [0, 1)"));
        }
        if !(self.point_budget_k > 0.0 && self.point_budget_k.is_finite()) {
            return Err(invalid("point_budget_k must be positive"));
        }
        let u = &self.uav;
        if !(u.arm_span > 0.0 && u.body_radius > 0.0 && u.arm_thickness > 0.0) {
            return Err(invalid("uav dimensions must be positive"));
        }
        if !self.ground_z.is_finite() {
            return Err(invalid("ground_z must be finite"));
        }
        Ok(())
    }
}

/// Signal of a background return: low reflectivity band, decaying with range.
pub fn background_signal(range: f64) -> f32 {
    (0.05 + 0.30 * signal_falloff(range)) as f32
}

/// Signal of a UAV return: high reflectivity band, decaying with range.
pub fn uav_signal(range: f64) -> f32 {
    (0.60 + 0.40 * signal_falloff(range)) as f32
}

fn signal_falloff(range: f64) -> f64 {
    1.0 / (1.0 + range / 5.0)
}

/// Per-frame generator seed derived from the scene seed and frame index.
pub fn frame_seed(seed: u64, frame_index: u32) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ (frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders one scan. Convenience wrapper over [`SceneRenderer`]; prefer the
/// renderer when producing many frames of the same scene.
pub fn render_scan<R: Rng + ?Sized>(
    scene: &SceneSpec,
    uav: Option<&GroundTruthSample>,
    intr: &SensorIntrinsics,
    frame_index: u32,
    rng: &mut R,
) -> Result<PanoramicScan> {
    let renderer = SceneRenderer::new(scene.clone(), *intr)?;
    Ok(renderer.render_with(uav, frame_index, rng))
}

/// Ray-cast cache for one scene and sensor.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    scene: SceneSpec,
    intr: SensorIntrinsics,
    rays: Vec<Point3>,
    /// Noise-free static range per pixel, 0 for no return.
    static_range: Vec<f64>,
}

impl SceneRenderer {
    pub fn new(scene: SceneSpec, intr: SensorIntrinsics) -> Result<Self> {
        scene.validate()?;
        intr.validate()?;
        let rays = intr.ray_table();
        let static_range = rays
            .iter()
            .map(|dir| {
                let mut best = f64::INFINITY;
                if dir.z < 0.0 && scene.ground_z < 0.0 {
                    best = scene.ground_z / dir.z;
                }
                for c in &scene.clutter {
                    if let Some(t) = c.intersect(dir) {
                        best = best.min(t);
                    }
                }
                if best >= intr.min_range && best <= intr.max_range {
                    best
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            scene,
            intr,
            rays,
            static_range,
        })
    }

    pub fn intrinsics(&self) -> &SensorIntrinsics {
        &self.intr
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    /// Renders frame `frame_index` with its own derived generator.
    pub fn render_frame(&self, uav: Option<&GroundTruthSample>, frame_index: u32) -> PanoramicScan {
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(self.scene.rng_seed, frame_index));
        self.render_with(uav, frame_index, &mut rng)
    }

    pub fn render_with<R: Rng + ?Sized>(
        &self,
        uav: Option<&GroundTruthSample>,
        frame_index: u32,
        rng: &mut R,
    ) -> PanoramicScan {
        let intr = &self.intr;
        let timestamp = uav.map_or(frame_index as f64 * intr.frame_period(), |u| u.t);
        let mut scan = PanoramicScan::empty(*intr, frame_index, timestamp);
        let noise = self.scene.noise;
        let normal = Normal::new(0.0, noise.range_sigma.max(f64::MIN_POSITIVE)).unwrap();
        let noisy = |rng: &mut R, r: f64| -> f64 {
            if noise.range_sigma > 0.0 {
                r + normal.sample(rng)
            } else {
                r
            }
        };

        let mut ranges = self.static_range.clone();
        let mut is_uav = vec![false; ranges.len()];
        let mut truth = None;

        if let Some(gt) = uav {
            let hits = self.uav_hits(&gt.position);
            let silhouette_roi = ImageRoi::bounding(
                hits.iter().map(|&(i, _)| PixelCoord::from_index(i, intr.cols)),
                intr.cols,
            );
            let budget = uav_point_count_model(gt.position.range(), self.scene.point_budget_k);
            let chosen: Vec<usize> = if hits.len() <= budget {
                (0..hits.len()).collect()
            } else {
                let mut idx = sample(rng, hits.len(), budget).into_vec();
                idx.sort_unstable();
                idx
            };
            for k in chosen {
                let (i, t) = hits[k];
                ranges[i] = t;
                is_uav[i] = true;
            }
            truth = Some(ScanTruth {
                uav_position: gt.position,
                silhouette_roi,
                uav_pixels: Vec::new(),
            });
        }

        let mut uav_pixels = Vec::new();
        for i in 0..ranges.len() {
            let r0 = ranges[i];
            if r0 <= 0.0 {
                continue;
            }
            if noise.dropout_prob > 0.0 && rng.random::<f64>() < noise.dropout_prob {
                continue;
            }
            let r = noisy(rng, r0) as f32;
            let r64 = r as f64;
            if r64 < intr.min_range || r64 > intr.max_range {
                continue;
            }
            scan.valid[i] = true;
            scan.range[i] = r;
            scan.points[i] = self.rays[i] * r64;
            scan.signal[i] = if is_uav[i] {
                uav_pixels.push(i);
                uav_signal(r64)
            } else {
                background_signal(r64)
            };
        }
        if let Some(t) = truth.as_mut() {
            t.uav_pixels = uav_pixels;
        }
        scan.truth = truth;
        scan
    }

    /// Pixels whose rays hit the UAV in front of the static scene, with hit
    /// distance, in flat-index order.
    fn uav_hits(&self, center: &Point3) -> Vec<(usize, f64)> {
        let intr = &self.intr;
        let u = &self.scene.uav;
        let bound = u.bounding_radius();
        let dist = center.range();
        if dist <= bound + 1e-6 {
            return Vec::new();
        }
        let half_angle = (bound / dist).asin();
        let phi_c = (center.z / dist).asin();
        let theta_c = center.azimuth();

        let half_fov = intr.fov_vertical / 2.0;
        let phi_hi = (phi_c + half_angle).min(half_fov);
        let phi_lo = (phi_c - half_angle).max(-half_fov);
        if phi_lo > phi_hi {
            return Vec::new();
        }
        let row_of = |phi: f64| -> usize {
            let r = ((half_fov - phi) / intr.row_step()).floor();
            (r.max(0.0) as usize).min(intr.rows - 1)
        };
        let (row_lo, row_hi) = (row_of(phi_hi), row_of(phi_lo));

        // widest azimuth half-width over the window's elevations
        let max_abs_phi = phi_hi.abs().max(phi_lo.abs()).min(1.5);
        let dtheta = (half_angle / max_abs_phi.cos()).min(std::f64::consts::PI);
        let col_step = intr.col_step();
        let c0 = ((theta_c - dtheta) / col_step).floor() as i64 - 1;
        let c1 = ((theta_c + dtheta) / col_step).floor() as i64 + 1;
        let ncols = intr.cols as i64;
        let span = (c1 - c0 + 1).min(ncols);

        let h = u.arm_span / 2.0;
        let t = u.arm_thickness / 2.0;
        let arm_x = (*center - Point3::new(h, t, t), *center + Point3::new(h, t, t));
        let arm_y = (*center - Point3::new(t, h, t), *center + Point3::new(t, h, t));

        let mut hits = Vec::new();
        for row in row_lo..=row_hi {
            for k in 0..span {
                let col = (c0 + k).rem_euclid(ncols) as usize;
                let i = row * intr.cols + col;
                let dir = &self.rays[i];
                let mut best = f64::INFINITY;
                if let Some(d) = ray_sphere(dir, center, u.body_radius) {
                    best = best.min(d);
                }
                if let Some(d) = ray_box(dir, &arm_x.0, &arm_x.1) {
                    best = best.min(d);
                }
                if let Some(d) = ray_box(dir, &arm_y.0, &arm_y.1) {
                    best = best.min(d);
                }
                if !best.is_finite() || best < intr.min_range || best > intr.max_range {
                    continue;
                }
                let behind = self.static_range[i];
                if behind > 0.0 && behind <= best {
                    continue;
                }
                hits.push((i, best));
            }
        }
        hits.sort_unstable_by_key(|&(i, _)| i);
        hits.dedup_by_key(|&mut (i, _)| i);
        hits
    }
}

/// Nearest positive hit of a ray from the origin along unit `dir`.
fn ray_sphere(dir: &Point3, center: &Point3, radius: f64) -> Option<f64> {
    let b = dir.dot(center);
    let c = center.dot(center) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t0 = b - s;
    if t0 > 0.0 {
        Some(t0)
    } else if b + s > 0.0 {
        Some(b + s)
    } else {
        None
    }
}

/// Slab test against an axis-aligned box, ray from the origin.
fn ray_box(dir: &Point3, lo: &Point3, hi: &Point3) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (d, l, h) in [(dir.x, lo.x, hi.x), (dir.y, lo.y, hi.y), (dir.z, lo.z, hi.z)] {
        if d.abs() < 1e-15 {
            if l > 0.0 || h < 0.0 {
                return None;
            }
            continue;
        }
        let (a, b) = (l / d, h / d);
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        t_near = t_near.max(a);
        t_far = t_far.min(b);
        if t_near > t_far {
            return None;
        }
    }
    if t_far <= 0.0 {
        None
    } else if t_near > 0.0 {
        Some(t_near)
    } else {
        Some(t_far)
    }
}
