//! Frame-by-frame UAV tracking in three modes.
//!
//! * `fused`: detect in the signal image; crop the cloud with the detection,
//!   or with the Kalman-predicted region when detection fails.
//! * `image_only`: detect in the signal image; no detection means no
//!   measurement this frame.
//! * `pcd_only`: never detects; always searches the predicted region and
//!   needs a known initial position.
//!
//! Every mode extracts the UAV by ground removal, DBSCAN and count/range
//! association against the previous UAV cluster, then filters the cluster
//! centroid through the constant-velocity Kalman filter.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{dbscan, ground_removal, select_cluster, Cluster, ClusterParams};
use crate::detect::Detector;
use crate::error::{invalid, Error, Result};
use crate::eval::{Trajectory, TrajectoryMeta};
use crate::geom::Point3;
use crate::kf::{self, predicted_roi, KfParams, TrackState};
use crate::scan::{roi_to_points, ImageRoi, PanoramicScan};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerMode {
    #[default]
    Fused,
    ImageOnly,
    PcdOnly,
}

impl TrackerMode {
    pub const ALL: [TrackerMode; 3] = [TrackerMode::Fused, TrackerMode::PcdOnly, TrackerMode::ImageOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrackerMode::Fused => "fused",
            TrackerMode::ImageOnly => "image_only",
            TrackerMode::PcdOnly => "pcd_only",
        }
    }

    pub fn needs_initial_position(&self) -> bool {
        matches!(self, TrackerMode::PcdOnly)
    }
}

impl std::fmt::Display for TrackerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrackerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fused" => Ok(TrackerMode::Fused),
            "image_only" | "image" => Ok(TrackerMode::ImageOnly),
            "pcd_only" | "pcd" => Ok(TrackerMode::PcdOnly),
            other => Err(invalid(format!("unknown tracker mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    Measured,
    Predicted,
}

impl PoseSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoseSource::Measured => "measured",
            PoseSource::Predicted => "predicted",
        }
    }
}

/// Tracker output for one scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub t: f64,
    pub position: Point3,
    pub velocity: Point3,
    pub source: PoseSource,
    /// Points in the accepted cluster, 0 for predicted poses.
    pub cluster_count: usize,
    /// Set once the consecutive-miss count reaches the loss threshold.
    pub lost: bool,
}

/// Point count and range of the last accepted UAV cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSummary {
    pub count: usize,
    pub range: f64,
}

impl From<&Cluster> for ClusterSummary {
    fn from(c: &Cluster) -> Self {
        Self {
            count: c.count,
            range: c.range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerParams {
    pub cluster: ClusterParams,
    pub kf: KfParams,
    /// Initial position standard deviation, m.
    pub init_pos_sigma: f64,
    /// Initial velocity standard deviation, m/s.
    pub init_vel_sigma: f64,
    /// Consecutive predicted frames after which the track is declared lost.
    pub lost_after: u32,
    /// How far from a manually supplied position a cluster may be to seed
    /// the association, m.
    pub seed_radius: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            cluster: ClusterParams::default(),
            kf: KfParams::default(),
            init_pos_sigma: 0.2,
            init_vel_sigma: 1.0,
            lost_after: 10,
            seed_radius: 1.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.kf.validate()?;
        if !(self.init_pos_sigma > 0.0 && self.init_vel_sigma > 0.0 && self.seed_radius > 0.0) {
            return Err(invalid("initial sigmas and seed radius must be positive"));
        }
        if self.lost_after == 0 {
            return Err(invalid("lost_after must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub kf: TrackState,
    /// `None` only between a manual initialization and the first frame that
    /// yields a cluster near the supplied position.
    pub prev_cluster: Option<ClusterSummary>,
    pub initialized: bool,
    pub mode: TrackerMode,
}

impl TrackerState {
    pub fn lost(&self, params: &TrackerParams) -> bool {
        self.kf.misses >= params.lost_after
    }

    fn pose(&self, source: PoseSource, cluster_count: usize, params: &TrackerParams) -> PoseEstimate {
        PoseEstimate {
            t: self.kf.t,
            position: self.kf.position(),
            velocity: self.kf.velocity(),
            source,
            cluster_count,
            lost: self.lost(params),
        }
    }
}

/// Clusters the non-ground points of `scan` inside `roi`. Member indices
/// refer to the ground-filtered crop.
pub fn cluster_roi(scan: &PanoramicScan, roi: &ImageRoi, params: &ClusterParams) -> Vec<Cluster> {
    let cropped = roi_to_points(scan, roi);
    let points = ground_removal(&cropped.points, &params.ground);
    dbscan(&points, params.eps, params.min_pts)
}

/// Object extraction: crop, remove ground, cluster, and associate with the
/// previous UAV cluster. Without a previous cluster the one nearest `anchor`
/// within `seed_radius` is taken.
fn extract_object(
    scan: &PanoramicScan,
    roi: &ImageRoi,
    prev: Option<&ClusterSummary>,
    anchor: &Point3,
    params: &TrackerParams,
) -> Option<Cluster> {
    let clusters = cluster_roi(scan, roi, &params.cluster);
    match prev {
        Some(prev) => select_cluster(&clusters, prev.count, prev.range, &params.cluster.assoc).cluster,
        None => nearest_cluster(clusters, anchor, params.seed_radius),
    }
}

fn nearest_cluster(clusters: Vec<Cluster>, anchor: &Point3, radius: f64) -> Option<Cluster> {
    clusters
        .into_iter()
        .map(|c| (c.centroid.distance(anchor), c))
        .filter(|(d, _)| *d <= radius)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

/// Starts a track from the first scan with a usable detection: the largest
/// cluster inside the detection becomes the UAV, at rest.
pub fn init_track(
    scan: &PanoramicScan,
    mode: TrackerMode,
    detector: &Detector,
    params: &TrackerParams,
) -> Result<Option<TrackerState>> {
    if mode.needs_initial_position() {
        return Err(invalid("pcd_only tracking needs a manual initial position"));
    }
    let Some(det) = detector.detect(scan)? else {
        return Ok(None);
    };
    let clusters = cluster_roi(scan, &det.roi, &params.cluster);
    // largest wins; clusters come ordered by lowest index, max_by keeps the last max
    let Some(largest) = clusters.iter().rev().max_by_key(|c| c.count) else {
        return Ok(None);
    };
    Ok(Some(TrackerState {
        kf: TrackState::at_rest(
            largest.centroid,
            scan.timestamp,
            params.init_pos_sigma.powi(2),
            params.init_vel_sigma.powi(2),
        ),
        prev_cluster: Some(largest.into()),
        initialized: true,
        mode,
    }))
}

/// Starts a track at a known position. The association reference is seeded
/// from the first scan processed.
pub fn init_track_manual(position: Point3, t: f64, mode: TrackerMode, params: &TrackerParams) -> Result<TrackerState> {
    if !position.is_finite() || !t.is_finite() {
        return Err(invalid("initial position and time must be finite"));
    }
    Ok(TrackerState {
        kf: TrackState::at_rest(position, t, params.init_pos_sigma.powi(2), params.init_vel_sigma.powi(2)),
        prev_cluster: None,
        initialized: true,
        mode,
    })
}

/// Seeds the association reference of a manually initialized track from the
/// scan taken at the initialization time, without moving the filter.
pub fn seed_from_scan(
    state: &TrackerState,
    scan: &PanoramicScan,
    params: &TrackerParams,
) -> (TrackerState, PoseEstimate) {
    let roi = predicted_roi(&state.kf, &scan.intrinsics, &params.kf);
    let anchor = state.kf.position();
    let found = extract_object(scan, &roi, None, &anchor, params);
    let mut next = state.clone();
    let (source, count) = match &found {
        Some(c) => {
            next.prev_cluster = Some(c.into());
            (PoseSource::Measured, c.count)
        }
        None => (PoseSource::Predicted, 0),
    };
    let pose = next.pose(source, count, params);
    (next, pose)
}

/// Processes one scan.
pub fn step(
    state: &TrackerState,
    scan: &PanoramicScan,
    detector: &Detector,
    params: &TrackerParams,
) -> Result<(TrackerState, PoseEstimate)> {
    if !state.initialized {
        return Err(Error::InvalidState("tracker is not initialized".into()));
    }
    let dt = scan.timestamp - state.kf.t;
    if !(dt > 0.0) {
        return Err(invalid(format!(
            "scan at t={} does not follow state at t={}",
            scan.timestamp, state.kf.t
        )));
    }
    let predicted = kf::predict(&state.kf, dt, &params.kf)?;
    let intr = &scan.intrinsics;

    let roi = match state.mode {
        TrackerMode::Fused => Some(match detector.detect(scan)? {
            Some(det) => det.roi,
            None => predicted_roi(&predicted, intr, &params.kf),
        }),
        TrackerMode::ImageOnly => detector.detect(scan)?.map(|det| det.roi),
        TrackerMode::PcdOnly => Some(predicted_roi(&predicted, intr, &params.kf)),
    };
    let anchor = predicted.position();
    let found = roi.and_then(|roi| extract_object(scan, &roi, state.prev_cluster.as_ref(), &anchor, params));

    let mut next = state.clone();
    let pose = match found {
        Some(cluster) => {
            next.kf = kf::update(&predicted, &cluster.centroid, &params.kf)?;
            next.prev_cluster = Some((&cluster).into());
            next.pose(PoseSource::Measured, cluster.count, params)
        }
        None => {
            next.kf = predicted;
            next.kf.misses += 1;
            next.pose(PoseSource::Predicted, 0, params)
        }
    };
    Ok((next, pose))
}

/// Stateful wrapper that initializes on demand and times each frame.
#[derive(Debug, Clone)]
pub struct Tracker {
    mode: TrackerMode,
    detector: Detector,
    params: TrackerParams,
    initial_position: Option<Point3>,
    state: Option<TrackerState>,
}

impl Tracker {
    pub fn new(mode: TrackerMode, detector: Detector, params: TrackerParams) -> Self {
        Self {
            mode,
            detector,
            params,
            initial_position: None,
            state: None,
        }
    }

    /// Known position at the first scan; required for `pcd_only`.
    pub fn with_initial_position(mut self, position: Point3) -> Self {
        self.initial_position = Some(position);
        self
    }

    pub fn mode(&self) -> TrackerMode {
        self.mode
    }

    pub fn state(&self) -> Option<&TrackerState> {
        self.state.as_ref()
    }

    /// Feeds one scan; returns a pose once the track is initialized.
    pub fn process(&mut self, scan: &PanoramicScan) -> Result<Option<PoseEstimate>> {
        match &self.state {
            Some(state) => {
                let (next, pose) = step(state, scan, &self.detector, &self.params)?;
                self.state = Some(next);
                Ok(Some(pose))
            }
            None if self.mode.needs_initial_position() => {
                let position = self
                    .initial_position
                    .ok_or_else(|| invalid("pcd_only tracking needs a manual initial position"))?;
                let state = init_track_manual(position, scan.timestamp, self.mode, &self.params)?;
                let (state, pose) = seed_from_scan(&state, scan, &self.params);
                self.state = Some(state);
                Ok(Some(pose))
            }
            None => {
                let Some(state) = init_track(scan, self.mode, &self.detector, &self.params)? else {
                    return Ok(None);
                };
                let count = state.prev_cluster.map_or(0, |c| c.count);
                let pose = state.pose(PoseSource::Measured, count, &self.params);
                self.state = Some(state);
                Ok(Some(pose))
            }
        }
    }

    /// Like [`process`](Self::process), also returning the wall-clock
    /// processing time in milliseconds.
    pub fn process_timed(&mut self, scan: &PanoramicScan) -> Result<(Option<PoseEstimate>, f64)> {
        let start = Instant::now();
        let pose = self.process(scan)?;
        Ok((pose, start.elapsed().as_secs_f64() * 1e3))
    }
}

/// Runs a tracker over time-ordered scans. `initial_position` is required for
/// `pcd_only` and ignored otherwise.
pub fn run_sequence<'a, I>(
    scans: I,
    mode: TrackerMode,
    detector: &Detector,
    params: &TrackerParams,
    initial_position: Option<Point3>,
) -> Result<Trajectory>
where
    I: IntoIterator<Item = &'a PanoramicScan>,
{
    params.validate()?;
    let mut tracker = Tracker::new(mode, detector.clone(), *params);
    if let Some(p) = initial_position {
        tracker = tracker.with_initial_position(p);
    }
    let mut traj = Trajectory::new(TrajectoryMeta {
        mode,
        ..Default::default()
    });
    let mut scans = scans.into_iter().peekable();
    if mode.needs_initial_position() && initial_position.is_none() && scans.peek().is_some() {
        return Err(invalid("pcd_only tracking needs a manual initial position"));
    }
    for scan in scans {
        let (pose, ms) = tracker.process_timed(scan)?;
        if let Some(pose) = pose {
            traj.samples.push(pose);
            traj.frame_times_ms.push(ms);
        }
    }
    Ok(traj)
}
