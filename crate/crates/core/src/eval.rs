//! Trajectory metrics: absolute pose error, velocity error, detectable
//! distance, and the cross-method comparison table.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::Point3;
use crate::sim::GroundTruthSample;
use crate::tracker::{PoseEstimate, PoseSource, TrackerMode};

/// Default nearest-time pairing tolerance, s.
pub const DEFAULT_MAX_DT: f64 = 0.06;
/// Instantaneous APE above which a frame counts toward sustained loss, m.
pub const LOSS_APE: f64 = 0.5;
/// Consecutive frames above [`LOSS_APE`] that make a loss sustained.
pub const LOSS_RUN: usize = 10;

pub const TRAJECTORY_HEADER: [&str; 9] = ["t", "x", "y", "z", "vx", "vy", "vz", "source", "cluster_count"];
pub const GROUND_TRUTH_HEADER: [&str; 7] = ["t", "x", "y", "z", "vx", "vy", "vz"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub mode: TrackerMode,
    pub scenario: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<PoseEstimate>,
    pub meta: TrajectoryMeta,
    /// Tracker wall-clock time per emitted sample, ms. Empty for
    /// trajectories read back from disk.
    pub frame_times_ms: Vec<f64>,
}

impl Trajectory {
    pub fn new(meta: TrajectoryMeta) -> Self {
        Self {
            meta,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn measured_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let measured = self.samples.iter().filter(|s| s.source == PoseSource::Measured).count();
        measured as f64 / self.samples.len() as f64
    }

    /// Writes `t,x,y,z,vx,vy,vz,source,cluster_count` rows with six decimals.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(TRAJECTORY_HEADER)?;
        for s in &self.samples {
            let p = s.position;
            let v = s.velocity;
            out.write_record([
                fmt6(s.t),
                fmt6(p.x),
                fmt6(p.y),
                fmt6(p.z),
                fmt6(v.x),
                fmt6(v.y),
                fmt6(v.z),
                s.source.as_str().to_string(),
                s.cluster_count.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a trajectory CSV. The lost flag is rebuilt from runs of
    /// predicted rows of length `lost_after`.
    pub fn read_csv<R: Read>(r: R, meta: TrajectoryMeta, lost_after: u32) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        check_header(rdr.headers()?, &TRAJECTORY_HEADER)?;
        let mut samples = Vec::new();
        let mut misses = 0u32;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let f = |k: usize| parse_f64(&rec, k, i);
            let source = match rec.get(7) {
                Some("measured") => PoseSource::Measured,
                Some("predicted") => PoseSource::Predicted,
                other => return Err(Error::Schema(format!("row {}: bad source {:?}", i + 2, other))),
            };
            let cluster_count = rec
                .get(8)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Schema(format!("row {}: bad cluster_count", i + 2)))?;
            misses = match source {
                PoseSource::Measured => 0,
                PoseSource::Predicted => misses + 1,
            };
            samples.push(PoseEstimate {
                t: f(0)?,
                position: Point3::new(f(1)?, f(2)?, f(3)?),
                velocity: Point3::new(f(4)?, f(5)?, f(6)?),
                source,
                cluster_count,
                lost: misses >= lost_after,
            });
        }
        Ok(Self {
            samples,
            meta,
            frame_times_ms: Vec::new(),
        })
    }
}

pub fn write_ground_truth_csv<W: Write>(w: W, gt: &[GroundTruthSample]) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(GROUND_TRUTH_HEADER)?;
    for s in gt {
        let (p, v) = (s.position, s.velocity);
        out.write_record([fmt6(s.t), fmt6(p.x), fmt6(p.y), fmt6(p.z), fmt6(v.x), fmt6(v.y), fmt6(v.z)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ground_truth_csv<R: Read>(r: R) -> Result<Vec<GroundTruthSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers()?, &GROUND_TRUTH_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |k: usize| parse_f64(&rec, k, i);
        out.push(GroundTruthSample {
            t: f(0)?,
            position: Point3::new(f(1)?, f(2)?, f(3)?),
            velocity: Point3::new(f(4)?, f(5)?, f(6)?),
        });
    }
    Ok(out)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn check_header(got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Schema(format!(
            "expected header `{}`, found `{}`",
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_f64(rec: &csv::StringRecord, k: usize, row: usize) -> Result<f64> {
    rec.get(k)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Schema(format!("row {}: column {} is not a number", row + 2, k + 1)))
}

/// Rotation followed by translation: `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(t: Point3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(t.x, t.y, t.z),
        }
    }

    pub fn yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if r.iter().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("transform has non-finite entries"));
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if ortho > 1e-9 {
            return Err(invalid(format!("rotation is not orthonormal (deviation {ortho:e})")));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(invalid("rotation determinant is not +1"));
        }
        Ok(())
    }

    fn rotate(&self, p: Point3) -> Point3 {
        let v = self.rotation * Vector3::new(p.x, p.y, p.z);
        Point3::new(v.x, v.y, v.z)
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let v = self.rotate(p);
        Point3::new(v.x + self.translation.x, v.y + self.translation.y, v.z + self.translation.z)
    }
}

/// Moves an estimated trajectory into the reference frame.
pub fn align_trajectory(est: &Trajectory, transform: &RigidTransform) -> Result<Trajectory> {
    transform.validate()?;
    let mut out = est.clone();
    for s in &mut out.samples {
        s.position = transform.apply(s.position);
        s.velocity = transform.rotate(s.velocity);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: f64,
    pub rmse: f64,
    pub max: f64,
    /// 25th, 50th and 75th percentiles, linearly interpolated.
    pub quartiles: [f64; 3],
}

impl AxisStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let rmse = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean,
            rmse,
            max: sorted[sorted.len() - 1],
            quartiles: [quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75)],
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub x: AxisStats,
    pub y: AxisStats,
    pub z: AxisStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TotalStats {
    pub mean: f64,
    pub rmse: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mode: TrackerMode,
    pub scenario: String,
    pub seed: u64,
    pub per_axis: AxisReport,
    pub total: TotalStats,
    pub velocity_per_axis: AxisReport,
    pub velocity_total: TotalStats,
    pub n_paired: usize,
    pub n_unpaired: usize,
    pub measured_fraction: f64,
    /// Largest truth range before the first sustained loss, m.
    pub detectable_distance: f64,
    /// Largest truth range before the tracker first flagged the track lost, m.
    pub non_lost_distance: f64,
    /// Truth range at the first lost-flagged frame, if any, m.
    pub first_lost_range: Option<f64>,
    pub max_truth_range: f64,
}

/// Per-estimate pairing: index into `gt` of the nearest-time sample within
/// `max_dt`, earlier sample on exact ties. `gt` must be time-sorted.
pub fn pair_nearest(est: &[PoseEstimate], gt: &[GroundTruthSample], max_dt: f64) -> Vec<Option<usize>> {
    est.iter()
        .map(|e| {
            let k = gt.partition_point(|g| g.t < e.t);
            let before = k.checked_sub(1).map(|i| (i, e.t - gt[i].t));
            let after = (k < gt.len()).then(|| (k, gt[k].t - e.t));
            let best = match (before, after) {
                (Some(b), Some(a)) => {
                    if a.1 < b.1 {
                        a
                    } else {
                        b
                    }
                }
                (Some(b), None) => b,
                (None, Some(a)) => a,
                (None, None) => return None,
            };
            (best.1 <= max_dt).then_some(best.0)
        })
        .collect()
}

pub fn compute_ape(est: &Trajectory, gt: &[GroundTruthSample], max_dt: f64) -> Result<ErrorReport> {
    if !(max_dt > 0.0) {
        return Err(invalid("max_dt must be positive"));
    }
    if gt.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(invalid("ground truth must be time-ordered"));
    }
    let pairs = pair_nearest(&est.samples, gt, max_dt);

    let mut pos_err: [Vec<f64>; 3] = Default::default();
    let mut vel_err: [Vec<f64>; 3] = Default::default();
    let mut total = Vec::new();
    let mut vel_total = Vec::new();
    let mut ranges = Vec::new();
    let mut lost_flags = Vec::new();
    for (e, g) in est.samples.iter().zip(&pairs) {
        let Some(g) = g.map(|i| &gt[i]) else { continue };
        let d = e.position - g.position;
        let dv = e.velocity - g.velocity;
        for (axis, (a, b)) in [(d.x, dv.x), (d.y, dv.y), (d.z, dv.z)].into_iter().enumerate() {
            pos_err[axis].push(a.abs());
            vel_err[axis].push(b.abs());
        }
        total.push(d.norm());
        vel_total.push(dv.norm());
        ranges.push(g.position.range());
        lost_flags.push(e.lost);
    }
    let n_paired = total.len();
    if n_paired == 0 {
        return Err(Error::NoPairs);
    }

    let loss_start = (0..n_paired).find(|&i| i + LOSS_RUN <= n_paired && total[i..i + LOSS_RUN].iter().all(|&a| a > LOSS_APE));
    let first_lost = lost_flags.iter().position(|&l| l);
    let max_before = |end: Option<usize>| ranges[..end.unwrap_or(n_paired)].iter().copied().fold(0.0, f64::max);

    let axis_report = |v: &[Vec<f64>; 3]| AxisReport {
        x: AxisStats::from_values(&v[0]),
        y: AxisStats::from_values(&v[1]),
        z: AxisStats::from_values(&v[2]),
    };
    Ok(ErrorReport {
        mode: est.meta.mode,
        scenario: est.meta.scenario.clone(),
        seed: est.meta.seed,
        per_axis: axis_report(&pos_err),
        total: total_stats(&total),
        velocity_per_axis: axis_report(&vel_err),
        velocity_total: total_stats(&vel_total),
        n_paired,
        n_unpaired: est.samples.len() - n_paired,
        measured_fraction: est.measured_fraction(),
        detectable_distance: max_before(loss_start),
        non_lost_distance: max_before(first_lost),
        first_lost_range: first_lost.map(|i| ranges[i]),
        max_truth_range: max_before(None),
    })
}

fn total_stats(values: &[f64]) -> TotalStats {
    let s = AxisStats::from_values(values);
    TotalStats {
        mean: s.mean,
        rmse: s.rmse,
        max: s.max,
    }
}

/// Frame-time summary for one tracker run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub n_frames: usize,
    pub mean_frame_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_frame_ms: f64,
    pub effective_fps: f64,
}

impl TimingStats {
    pub fn from_frame_times(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Self::default();
        }
        let mean = ms.iter().sum::<f64>() / ms.len() as f64;
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Self {
            n_frames: ms.len(),
            mean_frame_ms: mean,
            p95_frame_ms: sorted[rank - 1],
            effective_fps: if mean > 0.0 { 1000.0 / mean } else { f64::INFINITY },
        }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mode: TrackerMode,
    pub detectable_distance: f64,
    pub ape_mean: f64,
    pub ape_rmse: f64,
    pub measured_fraction: f64,
    pub fps: Option<f64>,
}

impl MethodSummary {
    pub fn from_report(report: &ErrorReport, timing: Option<&TimingStats>) -> Self {
        Self {
            mode: report.mode,
            detectable_distance: report.detectable_distance,
            ape_mean: report.total.mean,
            ape_rmse: report.total.rmse,
            measured_fraction: report.measured_fraction,
            fps: timing.map(|t| t.effective_fps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Better,
    Tie,
    Worse,
}

impl Ordering {
    fn of(a: f64, b: f64) -> Self {
        if a < b {
            Ordering::Better
        } else if a > b {
            Ordering::Worse
        } else {
            Ordering::Tie
        }
    }

    /// Reference is no worse than the baseline.
    pub fn at_least_as_good(&self) -> bool {
        !matches!(self, Ordering::Worse)
    }
}

/// Reference method against one baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub reference: TrackerMode,
    pub baseline: TrackerMode,
    pub mean: Ordering,
    pub rmse: Ordering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<MethodSummary>,
    pub verdicts: Vec<Verdict>,
    /// Unique lowest mean APE, `None` on a tie.
    pub best_mean: Option<TrackerMode>,
    pub best_rmse: Option<TrackerMode>,
}

fn unique_min(rows: &[MethodSummary], key: impl Fn(&MethodSummary) -> f64) -> Option<TrackerMode> {
    let min = rows.iter().map(&key).fold(f64::INFINITY, f64::min);
    let mut hits = rows.iter().filter(|r| key(r) == min);
    let first = hits.next()?;
    hits.next().is_none().then_some(first.mode)
}

/// Compares every baseline against the fused row (or the first row when no
/// fused row is present).
pub fn compare_methods(rows: &[MethodSummary]) -> Result<Comparison> {
    if rows.len() < 2 {
        return Err(invalid("comparison needs at least two methods"));
    }
    let reference = rows.iter().find(|r| r.mode == TrackerMode::Fused).unwrap_or(&rows[0]);
    let verdicts = rows
        .iter()
        .filter(|r| !std::ptr::eq(*r, reference))
        .map(|r| Verdict {
            reference: reference.mode,
            baseline: r.mode,
            mean: Ordering::of(reference.ape_mean, r.ape_mean),
            rmse: Ordering::of(reference.ape_rmse, r.ape_rmse),
        })
        .collect();
    Ok(Comparison {
        rows: rows.to_vec(),
        verdicts,
        best_mean: unique_min(rows, |r| r.ape_mean),
        best_rmse: unique_min(rows, |r| r.ape_rmse),
    })
}

impl Comparison {
    pub fn summary(&self) -> String {
        match (self.best_mean, self.best_rmse) {
            (Some(m), Some(r)) if m == r => format!("{m} best mean APE and RMSE"),
            (Some(m), _) => format!("{m} best mean APE"),
            (None, _) => "tie on mean APE, no winner".to_string(),
        }
    }

    /// Aligned plain-text table followed by one line per verdict.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12}{:>12}{:>12}{:>12}{:>10}{:>10}",
            "mode", "distance_m", "ape_mean_m", "ape_rmse_m", "measured", "fps"
        );
        for r in &self.rows {
            let fps = r.fps.map_or_else(|| "-".to_string(), |f| format!("{f:.1}"));
            let _ = writeln!(
                s,
                "{:<12}{:>12.2}{:>12.4}{:>12.4}{:>10.3}{:>10}",
                r.mode.as_str(),
                r.detectable_distance,
                r.ape_mean,
                r.ape_rmse,
                r.measured_fraction,
                fps
            );
        }
        let _ = writeln!(s);
        for v in &self.verdicts {
            let word = |o: Ordering| match o {
                Ordering::Better => "better",
                Ordering::Tie => "tie",
                Ordering::Worse => "worse",
            };
            let _ = writeln!(
                s,
                "{} vs {}: mean {}, rmse {}",
                v.reference,
                v.baseline,
                word(v.mean),
                word(v.rmse)
            );
        }
        let _ = writeln!(s, "verdict: {}", self.summary());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pose(t: f64, p: [f64; 3], v: [f64; 3]) -> PoseEstimate {
        PoseEstimate {
            t,
            position: p.into(),
            velocity: v.into(),
            source: PoseSource::Measured,
            cluster_count: 10,
            lost: false,
        }
    }

    fn gt(t: f64, p: [f64; 3], v: [f64; 3]) -> GroundTruthSample {
        GroundTruthSample {
            t,
            position: p.into(),
            velocity: v.into(),
        }
    }

    fn traj(samples: Vec<PoseEstimate>) -> Trajectory {
        Trajectory {
            samples,
            ..Default::default()
        }
    }

    #[test]
    fn three_four_five() {
        let r = compute_ape(
            &traj(vec![pose(0.0, [1.03, 2.04, 3.0], [0.0; 3])]),
            &[gt(0.0, [1.0, 2.0, 3.0], [0.0; 3])],
            0.06,
        )
        .unwrap();
        assert_abs_diff_eq!(r.total.mean, 0.05, epsilon = 1e-15);
        assert_eq!(r.n_paired, 1);
    }

    #[test]
    fn constant_offset() {
        let truth: Vec<_> = (0..100).map(|i| gt(i as f64 * 0.01, [i as f64 * 0.02, 1.0, 0.0], [2.0, 0.0, 0.0])).collect();
        let est: Vec<_> = truth
            .iter()
            .step_by(10)
            .map(|g| pose(g.t, [g.position.x + 0.1, 1.0, 0.0], [2.0, 0.0, 0.0]))
            .collect();
        let r = compute_ape(&traj(est), &truth, 0.06).unwrap();
        assert_abs_diff_eq!(r.per_axis.x.mean, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_axis.x.rmse, 0.1, epsilon = 1e-12);
        assert_eq!(r.per_axis.y.mean, 0.0);
        assert_eq!(r.per_axis.z.rmse, 0.0);
        assert_abs_diff_eq!(r.total.mean, 0.1, epsilon = 1e-12);
        assert_eq!(r.velocity_total.mean, 0.0);
        assert_eq!(r.n_paired, 10);
    }

    #[test]
    fn unpaired_dropped_and_counted() {
        let truth = vec![gt(0.0, [0.0; 3], [0.0; 3]), gt(1.0, [0.0; 3], [0.0; 3])];
        let est = vec![pose(0.0, [0.0; 3], [0.0; 3]), pose(0.5, [9.0; 3], [0.0; 3])];
        let r = compute_ape(&traj(est), &truth, 0.06).unwrap();
        assert_eq!((r.n_paired, r.n_unpaired), (1, 1));
        assert_eq!(r.total.mean, 0.0);
    }

    #[test]
    fn no_pairs_is_an_error() {
        let truth = vec![gt(0.0, [0.0; 3], [0.0; 3])];
        let est = vec![pose(5.0, [0.0; 3], [0.0; 3])];
        assert!(matches!(compute_ape(&traj(est), &truth, 0.06), Err(Error::NoPairs)));
        assert!(matches!(compute_ape(&traj(vec![]), &truth, 0.06), Err(Error::NoPairs)));
        assert!(compute_ape(&traj(vec![]), &truth, 0.0).is_err());
    }

    #[test]
    fn equidistant_pairs_with_earlier() {
        let truth = vec![gt(0.0, [0.0; 3], [0.0; 3]), gt(0.1, [1.0, 0.0, 0.0], [0.0; 3])];
        let pairs = pair_nearest(&[pose(0.05, [0.0; 3], [0.0; 3])], &truth, 0.06);
        assert_eq!(pairs, vec![Some(0)]);
    }

    #[test]
    fn detectable_distance_stops_at_sustained_loss() {
        let truth: Vec<_> = (0..40).map(|i| gt(i as f64 * 0.1, [1.0 + i as f64 * 0.1, 0.0, 0.0], [0.0; 3])).collect();
        let mut est: Vec<_> = truth.iter().map(|g| pose(g.t, g.position.to_array(), [0.0; 3])).collect();
        // brief spike that does not count, then sustained loss from index 20
        est[5].position.y = 1.0;
        for e in &mut est[20..] {
            e.position.y = 1.0;
        }
        est[25].lost = true;
        let r = compute_ape(&traj(est), &truth, 0.06).unwrap();
        assert_abs_diff_eq!(r.detectable_distance, 2.9, epsilon = 1e-12);
        assert_abs_diff_eq!(r.non_lost_distance, 3.4, epsilon = 1e-12);
        assert_abs_diff_eq!(r.first_lost_range.unwrap(), 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.max_truth_range, 4.9, epsilon = 1e-12);
    }

    #[test]
    fn quartiles_interpolate() {
        let s = AxisStats::from_values(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.quartiles, [1.75, 2.5, 3.25]);
        assert_eq!(s.max, 4.0);
    }

    #[test]
    fn align_examples() {
        let t = traj(vec![pose(0.0, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0])]);
        assert_eq!(align_trajectory(&t, &RigidTransform::identity()).unwrap(), t);

        let moved = align_trajectory(&t, &RigidTransform::translation(Point3::new(1.0, 0.0, 0.0))).unwrap();
        assert_eq!(moved.samples[0].position, Point3::new(2.0, 0.0, 0.0));
        assert_eq!(moved.samples[0].velocity, Point3::new(1.0, 0.0, 0.0));

        let yawed = align_trajectory(&t, &RigidTransform::yaw(std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(yawed.samples[0].position.distance(&Point3::new(0.0, 1.0, 0.0)) < 1e-15);
        assert!(yawed.samples[0].velocity.distance(&Point3::new(0.0, 1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn non_rigid_rejected() {
        let t = traj(vec![]);
        let mut scale = RigidTransform::identity();
        scale.rotation *= 1.01;
        assert!(align_trajectory(&t, &scale).is_err());
        let mut mirror = RigidTransform::identity();
        mirror.rotation[(2, 2)] = -1.0;
        assert!(align_trajectory(&t, &mirror).is_err());
    }

    fn row(mode: TrackerMode, mean: f64, rmse: f64, dist: f64) -> MethodSummary {
        MethodSummary {
            mode,
            detectable_distance: dist,
            ape_mean: mean,
            ape_rmse: rmse,
            measured_fraction: 1.0,
            fps: None,
        }
    }

    #[test]
    fn table_rows_give_fused_best() {
        let c = compare_methods(&[
            row(TrackerMode::PcdOnly, 0.104, 0.142, 8.0),
            row(TrackerMode::ImageOnly, 0.078, 0.088, 2.4),
            row(TrackerMode::Fused, 0.061, 0.067, 8.0),
        ])
        .unwrap();
        assert_eq!(c.summary(), "fused best mean APE and RMSE");
        assert_eq!(c.verdicts.len(), 2);
        assert!(c.verdicts.iter().all(|v| v.mean == Ordering::Better && v.rmse == Ordering::Better));
        assert!(c.to_text().contains("verdict: fused best mean APE and RMSE"));
    }

    #[test]
    fn identical_reports_tie() {
        let c = compare_methods(&[row(TrackerMode::Fused, 0.1, 0.2, 8.0), row(TrackerMode::PcdOnly, 0.1, 0.2, 8.0)]).unwrap();
        assert_eq!(c.best_mean, None);
        assert_eq!(c.best_rmse, None);
        assert_eq!(c.verdicts.len(), 1);
        assert_eq!(c.verdicts[0].mean, Ordering::Tie);
        assert!(c.summary().contains("no winner"));
        assert!(compare_methods(&[row(TrackerMode::Fused, 0.1, 0.2, 8.0)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut samples = vec![pose(0.1, [1.0, -2.0, 0.5], [0.1, 0.2, -0.3])];
        for i in 0..11 {
            let mut p = pose(0.2 + i as f64 * 0.1, [1.0, 2.0, 3.0], [0.0; 3]);
            p.source = PoseSource::Predicted;
            p.cluster_count = 0;
            p.lost = i >= 9;
            samples.push(p);
        }
        let t = traj(samples);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x,y,z,vx,vy,vz,source,cluster_count\n0.100000,1.000000,-2.000000,"));
        assert!(!text.contains('\r'));
        let back = Trajectory::read_csv(&buf[..], TrajectoryMeta::default(), 10).unwrap();
        assert_eq!(back.samples.len(), t.samples.len());
        for (a, b) in back.samples.iter().zip(&t.samples) {
            assert_eq!(a.source, b.source);
            assert_eq!(a.lost, b.lost);
            assert!(a.position.distance(&b.position) < 1e-6);
        }
    }

    #[test]
    fn bad_csv_header_rejected() {
        let text = "t,x,y\n0,0,0\n";
        assert!(matches!(
            Trajectory::read_csv(text.as_bytes(), TrajectoryMeta::default(), 10),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn timing_stats() {
        let ms: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = TimingStats::from_frame_times(&ms);
        assert_eq!(t.p95_frame_ms, 95.0);
        assert_abs_diff_eq!(t.effective_fps, 1000.0 / 50.5, epsilon = 1e-12);
    }
}
