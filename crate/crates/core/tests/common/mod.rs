//! Brute-force oracles and fixtures shared by the integration tests and the
//! acceptance runner. Each oracle is written independently of the library
//! code it checks.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use nalgebra::{SMatrix, SymmetricEigen};
use pano_track::cluster::dbscan;
use pano_track::eval::{compute_ape, Trajectory, TrajectoryMeta};
use pano_track::geom::{project, unproject};
use pano_track::kf::{predict, process_noise, transition, update, KfParams, StateVector, TrackState};
use pano_track::scan::roi_to_points;
use pano_track::sim::{GroundTruthSample, SceneRenderer, SceneSpec};
use pano_track::{ImageRoi, PanoramicScan, Point3, PoseEstimate, PoseSource, SensorIntrinsics, TrackerMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn bundled_scenarios() -> Vec<PathBuf> {
    ["spiral_8m.json", "spiral_6m.json", "elliptical_7m.json"]
        .iter()
        .map(|f| scenario_dir().join(f))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

/// Uniform point inside the sensor envelope.
pub fn random_envelope_point<R: Rng>(rng: &mut R, intr: &SensorIntrinsics) -> Point3 {
    let r = rng.random_range(intr.min_range..intr.max_range);
    let half = intr.fov_vertical / 2.0;
    let el = rng.random_range(-half..half);
    let az = rng.random_range(-PI..PI);
    Point3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin())
}

fn wrap_angle(a: f64) -> f64 {
    let a = a.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Largest azimuth and elevation deviations, in bins, over `n` random
/// round trips.
pub fn round_trip_worst(n: usize, seed: u64) -> (f64, f64) {
    let intr = SensorIntrinsics::default();
    let mut rng = rng(seed);
    let (col_bin, row_bin) = (TAU / intr.cols as f64, intr.fov_vertical / intr.rows as f64);
    let (mut worst_az, mut worst_el) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let p = random_envelope_point(&mut rng, &intr);
        let px = project(&p, &intr).expect("in envelope");
        let q = unproject(px, p.range(), &intr).expect("valid pixel");
        let daz = wrap_angle(p.y.atan2(p.x) - q.y.atan2(q.x)).abs();
        let del = ((p.z / p.range()).asin() - (q.z / q.range()).asin()).abs();
        worst_az = worst_az.max(daz / col_bin);
        worst_el = worst_el.max(del / row_bin);
    }
    (worst_az, worst_el)
}

pub fn random_roi<R: Rng>(rng: &mut R, rows: usize, cols: usize, wrapping: bool) -> ImageRoi {
    let row_min = rng.random_range(0..rows);
    let row_max = rng.random_range(row_min..rows);
    let col_len = rng.random_range(if wrapping { 2 } else { 1 }..=cols / 3);
    let col_start = if wrapping {
        // start late enough that the run crosses the seam
        rng.random_range(cols - col_len + 1..cols)
    } else {
        rng.random_range(0..=cols - col_len)
    };
    ImageRoi { row_min, row_max, col_start, col_len }
}

/// Keep a valid pixel iff its coordinates fall inside the region.
pub fn oracle_roi_pixels(scan: &PanoramicScan, roi: &ImageRoi) -> BTreeSet<(usize, usize)> {
    let cols = scan.intrinsics.cols;
    (0..scan.valid.len())
        .filter(|&i| scan.valid[i])
        .map(|i| (i / cols, i % cols))
        .filter(|&(r, c)| {
            let offset = (c + cols - roi.col_start % cols) % cols;
            r >= roi.row_min && r <= roi.row_max && offset < roi.col_len
        })
        .collect()
}

/// A cluttered scan with the UAV near the seam so that wrapping regions see
/// real returns.
pub fn seam_scan() -> PanoramicScan {
    let renderer = SceneRenderer::new(SceneSpec { rng_seed: 5, ..Default::default() }, SensorIntrinsics::default())
        .expect("default scene");
    let uav = GroundTruthSample {
        t: 0.0,
        position: Point3::new(1.2, 0.02, -0.2),
        velocity: Point3::ORIGIN,
    };
    renderer.render_frame(Some(&uav), 0)
}

/// Checks `roi_to_points` on `n` random regions, `n_wrap` of which cross the
/// seam. Returns the number of mismatching regions.
pub fn roi_mismatches(n: usize, n_wrap: usize, seed: u64) -> usize {
    let scan = seam_scan();
    let (rows, cols) = (scan.rows(), scan.cols());
    let mut rng = rng(seed);
    (0..n)
        .filter(|&k| {
            let roi = random_roi(&mut rng, rows, cols, k < n_wrap);
            assert_eq!(roi.wraps(cols), k < n_wrap, "fixture produced {roi:?}");
            let got = roi_to_points(&scan, &roi);
            let pixels: BTreeSet<_> = got.pixels.iter().map(|p| (p.row, p.col)).collect();
            let points_match = got
                .pixels
                .iter()
                .zip(&got.points)
                .all(|(p, q)| scan.points[p.row * cols + p.col] == *q);
            pixels.len() != got.len() || pixels != oracle_roi_pixels(&scan, &roi) || !points_match
        })
        .count()
}

// ---------------------------------------------------------------- dbscan

/// Partition as a set of member sets.
pub type Partition = BTreeSet<Vec<usize>>;

/// eps-graph BFS over core points; each border point joins the component of
/// its lowest-indexed core neighbor.
pub fn oracle_dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Partition {
    let n = points.len();
    let near = |i: usize, j: usize| points[i].distance_squared(&points[j]) <= eps * eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if core[j] && comp[j] == usize::MAX && near(i, j) {
                    comp[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if !core[i] {
            if let Some(owner) = (0..n).find(|&j| core[j] && near(i, j)) {
                comp[i] = comp[owner];
            }
        }
    }
    let mut groups = vec![Vec::new(); next];
    for i in 0..n {
        if comp[i] != usize::MAX {
            groups[comp[i]].push(i);
        }
    }
    groups.into_iter().collect()
}

/// Random blobby cloud: a few Gaussian clumps plus uniform noise, at a
/// spacing comparable to eps so that border points are common.
pub fn random_cloud<R: Rng>(rng: &mut R, n: usize) -> Vec<Point3> {
    let clumps: Vec<Point3> = (0..rng.random_range(1..=5))
        .map(|_| Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)))
        .collect();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                Point3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0))
            } else {
                let c = clumps[rng.random_range(0..clumps.len())];
                let s: f64 = rng.random_range(0.1..0.6);
                let g = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
                Point3::new(c.x + s * g(rng), c.y + s * g(rng), c.z + s * g(rng))
            }
        })
        .collect()
}

pub fn library_partition(points: &[Point3], eps: f64, min_pts: usize) -> Partition {
    dbscan(points, eps, min_pts).into_iter().map(|c| c.indices).collect()
}

/// Runs `n` random instances; returns how many disagree with the oracle.
pub fn dbscan_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = rng(seed);
    (0..n)
        .filter(|_| {
            let size = rng.random_range(1..=200);
            let points = random_cloud(&mut rng, size);
            let eps = rng.random_range(0.1..0.8);
            let min_pts = rng.random_range(1..=6);
            library_partition(&points, eps, min_pts) != oracle_dbscan(&points, eps, min_pts)
        })
        .count()
}

// ---------------------------------------------------------------- kalman

pub fn symmetry_gap(s: &TrackState) -> f64 {
    (s.p - s.p.transpose()).abs().max()
}

pub fn min_eigenvalue(s: &TrackState) -> f64 {
    let sym = (s.p + s.p.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Worst symmetry gap and smallest eigenvalue over `steps` random
/// predict/update operations, including long prediction-only stretches and
/// measurements far from the state.
pub fn kf_stress(steps: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let params = KfParams::default();
    let mut s = TrackState::at_rest(Point3::new(1.0, 2.0, 0.0), 0.0, 0.04, 1.0);
    let (mut gap, mut min_eig) = (0.0f64, f64::INFINITY);
    for _ in 0..steps {
        let dt = rng.random_range(0.001..0.5);
        s = predict(&s, dt, &params).expect("finite");
        if rng.random_bool(0.7) {
            let spread = if rng.random_bool(0.05) { 50.0 } else { 0.2 };
            let p = s.position();
            let z = Point3::new(
                p.x + rng.random_range(-spread..spread),
                p.y + rng.random_range(-spread..spread),
                p.z + rng.random_range(-spread..spread),
            );
            s = update(&s, &z, &params).expect("finite");
        }
        gap = gap.max(symmetry_gap(&s));
        min_eig = min_eig.min(min_eigenvalue(&s));
    }
    (gap, min_eig)
}

/// Gain of a position-variance-1 prior against a variance-1 measurement, and
/// the posterior variance.
pub fn scalar_gain_example() -> (f64, f64) {
    let params = KfParams { r_pos: 1.0, ..Default::default() };
    let prior = TrackState::at_rest(Point3::ORIGIN, 0.0, 1.0, 1.0);
    let post = update(&prior, &Point3::new(1.0, 0.0, 0.0), &params).expect("finite");
    (post.x[0], post.p[(0, 0)])
}

/// Two-sided 95% chi-square bounds for three degrees of freedom.
pub fn chi2_band_3dof() -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let chi = ChiSquared::new(3.0).expect("dof > 0");
    (chi.inverse_cdf(0.025), chi.inverse_cdf(0.975))
}

fn sample_gaussian<R: Rng>(rng: &mut R, cov: &SMatrix<f64, 6, 6>) -> StateVector {
    let eig = SymmetricEigen::new(*cov);
    let z = StateVector::from_fn(|i, _| {
        let n: f64 = StandardNormal.sample(rng);
        eig.eigenvalues[i].max(0.0).sqrt() * n
    });
    eig.eigenvectors * z
}

/// Fraction of steps whose position NEES lies inside the 95% band, on a
/// constant-velocity truth driven by the filter's own process and
/// measurement noise.
pub fn nees_occupancy(steps: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let params = KfParams::default();
    let (lo, hi) = chi2_band_3dof();
    let dt = 0.1;
    let mut s = TrackState::at_rest(Point3::new(2.0, 0.0, -0.3), 0.0, 0.04, 1.0);
    let mut truth = s.x + sample_gaussian(&mut rng, &s.p);
    let f = transition(dt);
    let q = process_noise(dt, params.q_accel);
    let mut inside = 0;
    for _ in 0..steps {
        truth = f * truth + sample_gaussian(&mut rng, &q);
        let g = |rng: &mut ChaCha8Rng| -> f64 {
            let n: f64 = StandardNormal.sample(rng);
            params.r_pos * n
        };
        let z = Point3::new(truth[0] + g(&mut rng), truth[1] + g(&mut rng), truth[2] + g(&mut rng));
        s = update(&predict(&s, dt, &params).expect("finite"), &z, &params).expect("finite");
        let e = truth.fixed_rows::<3>(0) - s.x.fixed_rows::<3>(0);
        let p = s.position_covariance();
        let nees = (e.transpose() * p.try_inverse().expect("positive definite") * e)[(0, 0)];
        if nees >= lo && nees <= hi {
            inside += 1;
        }
    }
    inside as f64 / steps as f64
}

// ---------------------------------------------------------------- ape

pub struct OracleApe {
    pub n_paired: usize,
    pub mean: f64,
    pub rmse: f64,
    pub max: f64,
    pub axis_mean: [f64; 3],
    pub vel_mean: f64,
}

/// Exhaustive nearest-time pairing (earliest truth sample on ties) and
/// direct norm arithmetic.
pub fn oracle_ape(est: &[PoseEstimate], gt: &[GroundTruthSample], max_dt: f64) -> OracleApe {
    let mut errs = Vec::new();
    let mut axes = [0.0; 3];
    let mut vel = 0.0;
    for e in est {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt.iter().enumerate() {
            let dt = (g.t - e.t).abs();
            if best.is_none_or(|(_, d)| dt < d) {
                best = Some((j, dt));
            }
        }
        let Some((j, dt)) = best else { continue };
        if dt > max_dt {
            continue;
        }
        let g = &gt[j];
        let d = [e.position.x - g.position.x, e.position.y - g.position.y, e.position.z - g.position.z];
        errs.push((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
        for k in 0..3 {
            axes[k] += d[k].abs();
        }
        let dv = [e.velocity.x - g.velocity.x, e.velocity.y - g.velocity.y, e.velocity.z - g.velocity.z];
        vel += (dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2]).sqrt();
    }
    let n = errs.len() as f64;
    OracleApe {
        n_paired: errs.len(),
        mean: errs.iter().sum::<f64>() / n,
        rmse: (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        max: errs.iter().copied().fold(0.0, f64::max),
        axis_mean: axes.map(|a| a / n),
        vel_mean: vel / n,
    }
}

fn random_point<R: Rng>(rng: &mut R, scale: f64) -> Point3 {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Random estimate/truth pair: truth at 100 Hz, estimates at jittered
/// 10 Hz stamps, some of which fall outside the truth span.
pub fn random_trajectory_pair<R: Rng>(rng: &mut R) -> (Trajectory, Vec<GroundTruthSample>) {
    let n_gt = rng.random_range(20..=500);
    let gt: Vec<GroundTruthSample> = (0..n_gt)
        .map(|i| GroundTruthSample {
            t: i as f64 * 0.01,
            position: random_point(rng, 8.0),
            velocity: random_point(rng, 1.0),
        })
        .collect();
    let span = (n_gt - 1) as f64 * 0.01;
    let n_est = rng.random_range(1..=50);
    let mut t = rng.random_range(-0.1..0.05);
    let mut traj = Trajectory::new(TrajectoryMeta {
        mode: TrackerMode::Fused,
        scenario: "random".into(),
        seed: 0,
    });
    for _ in 0..n_est {
        t += rng.random_range(0.005..0.15);
        if t > span + 0.2 {
            break;
        }
        traj.samples.push(PoseEstimate {
            t,
            position: random_point(rng, 8.0),
            velocity: random_point(rng, 1.0),
            source: PoseSource::Measured,
            cluster_count: 1,
            lost: false,
        });
    }
    (traj, gt)
}

/// Largest absolute difference between library and oracle statistics over
/// `n` random pairs; pairs where neither side pairs anything are skipped.
pub fn ape_worst_gap(n: usize, seed: u64, max_dt: f64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < n {
        let (est, gt) = random_trajectory_pair(&mut rng);
        let oracle = oracle_ape(&est.samples, &gt, max_dt);
        let Ok(report) = compute_ape(&est, &gt, max_dt) else {
            assert_eq!(oracle.n_paired, 0, "library found no pairs where the oracle did");
            continue;
        };
        assert_eq!(report.n_paired, oracle.n_paired);
        let axes = [report.per_axis.x.mean, report.per_axis.y.mean, report.per_axis.z.mean];
        let gaps = [
            (report.total.mean - oracle.mean).abs(),
            (report.total.rmse - oracle.rmse).abs(),
            (report.total.max - oracle.max).abs(),
            (report.velocity_total.mean - oracle.vel_mean).abs(),
            (axes[0] - oracle.axis_mean[0]).abs(),
            (axes[1] - oracle.axis_mean[1]).abs(),
            (axes[2] - oracle.axis_mean[2]).abs(),
        ];
        worst = gaps.into_iter().fold(worst, f64::max);
        checked += 1;
    }
    worst
}

/// The 3-4-5 fixture: one estimate 0.03/0.04 m off its truth sample.
pub fn three_four_five() -> f64 {
    let gt = vec![GroundTruthSample {
        t: 0.0,
        position: Point3::ORIGIN,
        velocity: Point3::ORIGIN,
    }];
    let mut est = Trajectory::new(TrajectoryMeta {
        mode: TrackerMode::Fused,
        scenario: "fixture".into(),
        seed: 0,
    });
    est.samples.push(PoseEstimate {
        t: 0.0,
        position: Point3::new(0.03, 0.04, 0.0),
        velocity: Point3::ORIGIN,
        source: PoseSource::Measured,
        cluster_count: 1,
        lost: false,
    });
    compute_ape(&est, &gt, 0.06).expect("one pair").total.mean
}
