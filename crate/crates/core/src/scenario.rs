//! Scenario files and the run/bench/report drivers behind the CLI.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cluster::ClusterParams;
use crate::detect::{Detector, DetectorConfig};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    compare_methods, compute_ape, read_ground_truth_csv, write_ground_truth_csv, Comparison, ErrorReport,
    MethodSummary, TimingStats, Trajectory, TrajectoryMeta, DEFAULT_MAX_DT,
};
use crate::geom::SensorIntrinsics;
use crate::kf::KfParams;
use crate::scan::{write_scan_dump, PanoramicScan};
use crate::sim::{frame_seed, make_trajectory, GroundTruthSample, SceneRenderer, SceneSpec, TrajectorySpec};
use crate::tracker::{Tracker, TrackerMode, TrackerParams};

/// Scans rendered at once; bounds memory at full resolution.
const RENDER_BATCH: usize = 32;
/// Minimum frame count accepted by [`benchmark`].
pub const MIN_BENCH_FRAMES: usize = 100;

/// Tracker settings that are not part of the cluster or filter sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerOptions {
    pub init_pos_sigma: f64,
    pub init_vel_sigma: f64,
    pub lost_after: u32,
    pub seed_radius: f64,
    /// Pairing tolerance against ground truth, s.
    pub max_dt: f64,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        let p = TrackerParams::default();
        Self {
            init_pos_sigma: p.init_pos_sigma,
            init_vel_sigma: p.init_vel_sigma,
            lost_after: p.lost_after,
            seed_radius: p.seed_radius,
            max_dt: DEFAULT_MAX_DT,
        }
    }
}

fn all_modes() -> Vec<TrackerMode> {
    TrackerMode::ALL.to_vec()
}

/// On-disk scenario description. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub sensor: SensorIntrinsics,
    /// `scene.rng_seed` is replaced by the top-level `seed`.
    #[serde(default)]
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub cluster: ClusterParams,
    #[serde(default)]
    pub kf: KfParams,
    #[serde(default = "all_modes")]
    pub modes: Vec<TrackerMode>,
    pub seed: u64,
    #[serde(default)]
    pub tracker: TrackerOptions,
}

impl ScenarioFile {
    /// Parses JSON text, reporting the offending line and field on failure.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let origin = path.display().to_string();
        let parsed = Self::from_json(&text, &origin)?;
        if overrides.is_empty() {
            parsed.validate()?;
            return Ok(parsed);
        }
        let mut value = serde_json::to_value(&parsed)?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let out: Self = serde_json::from_value(value).map_err(|e| Error::Schema(format!("{origin} after overrides: {e}")))?;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.scene.validate()?;
        self.trajectory.validate()?;
        self.detector.validate()?;
        self.tracker_params().validate()?;
        if self.modes.is_empty() {
            return Err(Error::Schema("`modes` must list at least one mode".into()));
        }
        let mut seen = self.modes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.modes.len() {
            return Err(Error::Schema("`modes` lists a mode twice".into()));
        }
        if !(self.tracker.max_dt > 0.0) {
            return Err(Error::Schema("`tracker.max_dt` must be positive".into()));
        }
        Ok(())
    }

    pub fn tracker_params(&self) -> TrackerParams {
        TrackerParams {
            cluster: self.cluster,
            kf: self.kf,
            init_pos_sigma: self.tracker.init_pos_sigma,
            init_vel_sigma: self.tracker.init_vel_sigma,
            lost_after: self.tracker.lost_after,
            seed_radius: self.tracker.seed_radius,
        }
    }

    /// Scans covering the trajectory at the sensor frame rate.
    pub fn default_frame_count(&self) -> usize {
        (self.trajectory.duration * self.sensor.frame_rate).floor() as usize + 1
    }

    /// Truth pose at the capture time of each frame.
    pub fn frame_truth(&self, n_frames: usize) -> Vec<GroundTruthSample> {
        (0..n_frames)
            .map(|i| self.trajectory.sample_at(i as f64 * self.sensor.frame_period()))
            .collect()
    }

    /// Dense ground truth over the span of `n_frames` scans.
    pub fn ground_truth(&self, n_frames: usize) -> Result<Vec<GroundTruthSample>> {
        let last = n_frames.saturating_sub(1) as f64 * self.sensor.frame_period();
        let spec = TrajectorySpec {
            duration: last.max(self.trajectory.duration),
            ..self.trajectory
        };
        let mut gt = make_trajectory(&spec)?;
        gt.retain(|g| g.t <= last + 0.5 / spec.sample_rate);
        Ok(gt)
    }

    pub fn renderer(&self) -> Result<SceneRenderer> {
        let scene = SceneSpec {
            rng_seed: self.seed,
            ..self.scene.clone()
        };
        SceneRenderer::new(scene, self.sensor)
    }

    pub fn detector(&self) -> Result<Detector> {
        Detector::new(self.detector.clone(), frame_seed(self.seed, u32::MAX))
    }

    fn meta(&self, mode: TrackerMode) -> TrajectoryMeta {
        TrajectoryMeta {
            mode,
            scenario: self.name.clone(),
            seed: self.seed,
        }
    }

    fn tracker(&self, mode: TrackerMode, first_truth: Option<&GroundTruthSample>) -> Result<Tracker> {
        let mut t = Tracker::new(mode, self.detector()?, self.tracker_params());
        if mode.needs_initial_position() {
            let first = first_truth.ok_or_else(|| invalid("pcd_only needs at least one frame"))?;
            t = t.with_initial_position(first.position);
        }
        Ok(t)
    }
}

/// Sets `a.b.c=value` in a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{spec}` is not key=value")))?;
    let keys: Vec<&str> = path.split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(invalid(format!("override `{spec}` has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| invalid(format!("override `{spec}`: `{key}` indexes a list")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| invalid(format!("override `{spec}`: index {idx} out of {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(invalid(format!("override `{spec}`: `{key}` is not inside an object"))),
        };
    }
    unreachable!("loop returns on the last key")
}

/// Command-line adjustments applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub modes: Option<Vec<TrackerMode>>,
    pub frames: Option<usize>,
    pub dump_scans: bool,
}

impl RunOptions {
    pub fn load(&self, path: &Path) -> Result<ScenarioFile> {
        let mut s = ScenarioFile::load(path, &self.overrides)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(modes) = &self.modes {
            s.modes = modes.clone();
        }
        s.validate()?;
        Ok(s)
    }
}

/// Parses `fused,pcd_only` style lists.
pub fn parse_modes(list: &str) -> Result<Vec<TrackerMode>> {
    list.split(',').filter(|m| !m.trim().is_empty()).map(str::parse).collect()
}

/// Result of tracking one scenario in every requested mode.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: ScenarioFile,
    pub n_frames: usize,
    pub ground_truth: Vec<GroundTruthSample>,
    pub trajectories: Vec<Trajectory>,
}

impl ScenarioRun {
    pub fn trajectory(&self, mode: TrackerMode) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.meta.mode == mode)
    }

    pub fn report(&self, mode: TrackerMode) -> Result<ErrorReport> {
        let traj = self
            .trajectory(mode)
            .ok_or_else(|| invalid(format!("mode {mode} was not run")))?;
        compute_ape(traj, &self.ground_truth, self.scenario.tracker.max_dt)
    }

    pub fn timing(&self, mode: TrackerMode) -> Option<TimingStats> {
        self.trajectory(mode).map(|t| TimingStats::from_frame_times(&t.frame_times_ms))
    }

    pub fn uninitialized_modes(&self) -> Vec<TrackerMode> {
        self.trajectories.iter().filter(|t| t.is_empty()).map(|t| t.meta.mode).collect()
    }
}

fn render_batch(renderer: &SceneRenderer, truth: &[GroundTruthSample], start: usize) -> Vec<PanoramicScan> {
    truth
        .par_iter()
        .enumerate()
        .map(|(i, g)| renderer.render_frame(Some(g), (start + i) as u32))
        .collect()
}

/// Renders and tracks `n_frames` scans. Modes run side by side over each
/// rendered batch; `on_batch` sees every batch before it is dropped.
pub fn track_scenario<F>(scenario: &ScenarioFile, n_frames: usize, mut on_batch: F) -> Result<ScenarioRun>
where
    F: FnMut(&[PanoramicScan]) -> Result<()>,
{
    scenario.validate()?;
    let truth = scenario.frame_truth(n_frames);
    let renderer = scenario.renderer()?;
    let mut trackers = scenario
        .modes
        .iter()
        .map(|&m| Ok((scenario.tracker(m, truth.first())?, Trajectory::new(scenario.meta(m)))))
        .collect::<Result<Vec<_>>>()?;

    for (b, chunk) in truth.chunks(RENDER_BATCH).enumerate() {
        let scans = render_batch(&renderer, chunk, b * RENDER_BATCH);
        trackers.par_iter_mut().try_for_each(|(tracker, traj)| -> Result<()> {
            for scan in &scans {
                let (pose, ms) = tracker.process_timed(scan)?;
                if let Some(pose) = pose {
                    traj.samples.push(pose);
                    traj.frame_times_ms.push(ms);
                }
            }
            Ok(())
        })?;
        on_batch(&scans)?;
    }

    Ok(ScenarioRun {
        scenario: scenario.clone(),
        n_frames,
        ground_truth: scenario.ground_truth(n_frames)?,
        trajectories: trackers.into_iter().map(|(_, t)| t).collect(),
    })
}

/// Paths of everything a `track` run wrote.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub trajectories: BTreeMap<TrackerMode, PathBuf>,
    pub ground_truth: PathBuf,
    pub reports: BTreeMap<TrackerMode, PathBuf>,
    pub comparison: Option<PathBuf>,
    pub timing: PathBuf,
    pub comparison_result: Option<Comparison>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn scan_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("scans")
}

fn dump_scans(dir: &Path, scans: &[PanoramicScan]) -> Result<()> {
    for scan in scans {
        let path = dir.join(format!("frame_{:06}.pano", scan.frame_index));
        let mut w = BufWriter::new(File::create(path)?);
        write_scan_dump(&mut w, scan)?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct NoInitReport<'a> {
    scenario: &'a str,
    seed: u64,
    n_frames: usize,
    modes: Vec<TrackerMode>,
}

/// Runs a scenario file end to end and writes every artifact into `out_dir`.
pub fn run_scenario(path: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunArtifacts> {
    let scenario = opts.load(path)?;
    let n_frames = opts.frames.unwrap_or_else(|| scenario.default_frame_count());
    fs::create_dir_all(out_dir)?;
    if opts.dump_scans {
        fs::create_dir_all(scan_dir(out_dir))?;
    }
    let dir = scan_dir(out_dir);
    let run = track_scenario(&scenario, n_frames, |scans| {
        if opts.dump_scans {
            dump_scans(&dir, scans)?;
        }
        Ok(())
    })?;
    write_run(&run, out_dir)
}

/// Writes trajectories, ground truth, reports, comparison and timing.
pub fn write_run(run: &ScenarioRun, out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)?;
    let mut art = RunArtifacts {
        ground_truth: out_dir.join("ground_truth.csv"),
        timing: out_dir.join("timing.json"),
        ..Default::default()
    };
    write_ground_truth_csv(BufWriter::new(File::create(&art.ground_truth)?), &run.ground_truth)?;

    let mut timing = BTreeMap::new();
    let mut rows = Vec::new();
    for traj in &run.trajectories {
        let mode = traj.meta.mode;
        let csv_path = out_dir.join(format!("trajectory_{mode}.csv"));
        traj.write_csv(BufWriter::new(File::create(&csv_path)?))?;
        art.trajectories.insert(mode, csv_path);
        let stats = TimingStats::from_frame_times(&traj.frame_times_ms);
        timing.insert(mode.as_str(), stats);
        if traj.is_empty() {
            continue;
        }
        let report = run.report(mode)?;
        let report_path = out_dir.join(format!("report_{mode}.json"));
        write_json(&report_path, &report)?;
        art.reports.insert(mode, report_path);
        rows.push(MethodSummary::from_report(&report, Some(&stats)));
    }
    write_json(&art.timing, &timing)?;

    if rows.len() >= 2 {
        let cmp = compare_methods(&rows)?;
        let path = out_dir.join("comparison.txt");
        fs::write(&path, cmp.to_text())?;
        art.comparison = Some(path);
        art.comparison_result = Some(cmp);
    }

    let missing = run.uninitialized_modes();
    if !missing.is_empty() {
        let report = NoInitReport {
            scenario: &run.scenario.name,
            seed: run.scenario.seed,
            n_frames: run.n_frames,
            modes: missing.clone(),
        };
        write_json(&out_dir.join("no_init.json"), &report)?;
        let names: Vec<_> = missing.iter().map(TrackerMode::as_str).collect();
        return Err(Error::NoInit(format!(
            "{} never initialized in {} frames",
            names.join(", "),
            run.n_frames
        )));
    }
    Ok(art)
}

/// Renders scans and writes them as binary dumps plus the ground truth.
pub fn generate_scans(path: &Path, out_dir: &Path, opts: &RunOptions) -> Result<usize> {
    let scenario = opts.load(path)?;
    let n_frames = opts.frames.unwrap_or_else(|| scenario.default_frame_count());
    let dir = scan_dir(out_dir);
    fs::create_dir_all(&dir)?;
    let renderer = scenario.renderer()?;
    let truth = scenario.frame_truth(n_frames);
    for (b, chunk) in truth.chunks(RENDER_BATCH).enumerate() {
        dump_scans(&dir, &render_batch(&renderer, chunk, b * RENDER_BATCH))?;
    }
    write_ground_truth_csv(
        BufWriter::new(File::create(out_dir.join("ground_truth.csv"))?),
        &scenario.ground_truth(n_frames)?,
    )?;
    Ok(n_frames)
}

/// Recomputes reports and the comparison from CSVs written by a track run.
pub fn report_from_dir(path: &Path, out_dir: &Path, opts: &RunOptions) -> Result<Comparison> {
    let scenario = opts.load(path)?;
    let gt = read_ground_truth_csv(BufReader::new(File::open(out_dir.join("ground_truth.csv"))?))?;
    let timing: BTreeMap<String, TimingStats> = match File::open(out_dir.join("timing.json")) {
        Ok(f) => serde_json::from_reader(BufReader::new(f))?,
        Err(_) => BTreeMap::new(),
    };
    let mut rows = Vec::new();
    for &mode in &scenario.modes {
        let csv_path = out_dir.join(format!("trajectory_{mode}.csv"));
        let Ok(file) = File::open(&csv_path) else {
            continue;
        };
        let traj = Trajectory::read_csv(BufReader::new(file), scenario.meta(mode), scenario.tracker.lost_after)?;
        if traj.is_empty() {
            continue;
        }
        let report = compute_ape(&traj, &gt, scenario.tracker.max_dt)?;
        write_json(&out_dir.join(format!("report_{mode}.json")), &report)?;
        rows.push(MethodSummary::from_report(&report, timing.get(mode.as_str())));
    }
    if rows.is_empty() {
        return Err(invalid(format!("no trajectory CSVs found in {}", out_dir.display())));
    }
    if rows.len() == 1 {
        return Err(invalid("report needs trajectories from at least two modes"));
    }
    let cmp = compare_methods(&rows)?;
    fs::write(out_dir.join("comparison.txt"), cmp.to_text())?;
    Ok(cmp)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    pub mode: TrackerMode,
    pub repetition: usize,
    pub timing: TimingStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub rows: usize,
    pub cols: usize,
    pub n_frames: usize,
    pub records: Vec<BenchRecord>,
    /// Frame times pooled over all repetitions, per mode.
    pub aggregate: BTreeMap<TrackerMode, TimingStats>,
}

/// Times tracker steps only. Scans are rendered ahead of each timed batch and
/// every mode runs alone on the rendered frames.
pub fn benchmark(scenario: &ScenarioFile, n_frames: usize, repetitions: usize) -> Result<BenchReport> {
    if n_frames < MIN_BENCH_FRAMES {
        return Err(invalid(format!("benchmark needs at least {MIN_BENCH_FRAMES} frames, got {n_frames}")));
    }
    if repetitions == 0 {
        return Err(invalid("repetitions must be at least 1"));
    }
    scenario.validate()?;
    let truth = scenario.frame_truth(n_frames);
    let renderer = scenario.renderer()?;
    let mut times: BTreeMap<(TrackerMode, usize), Vec<f64>> = BTreeMap::new();
    let mut trackers: Vec<_> = scenario
        .modes
        .iter()
        .flat_map(|&m| (0..repetitions).map(move |r| (m, r)))
        .map(|(m, r)| Ok(((m, r), scenario.tracker(m, truth.first())?)))
        .collect::<Result<_>>()?;

    for (b, chunk) in truth.chunks(RENDER_BATCH).enumerate() {
        let scans = render_batch(&renderer, chunk, b * RENDER_BATCH);
        for (key, tracker) in &mut trackers {
            let slot = times.entry(*key).or_default();
            for scan in &scans {
                let (pose, ms) = tracker.process_timed(scan)?;
                if pose.is_some() {
                    slot.push(ms);
                }
            }
        }
    }

    let mut records = Vec::new();
    let mut pooled: BTreeMap<TrackerMode, Vec<f64>> = BTreeMap::new();
    for ((mode, repetition), ms) in &times {
        records.push(BenchRecord {
            mode: *mode,
            repetition: *repetition,
            timing: TimingStats::from_frame_times(ms),
        });
        pooled.entry(*mode).or_default().extend_from_slice(ms);
    }
    Ok(BenchReport {
        scenario: scenario.name.clone(),
        rows: scenario.sensor.rows,
        cols: scenario.sensor.cols,
        n_frames,
        records,
        aggregate: pooled.iter().map(|(m, ms)| (*m, TimingStats::from_frame_times(ms))).collect(),
    })
}

/// Loads, benchmarks and writes `timing.json` into `out_dir`.
pub fn run_benchmark(path: &Path, out_dir: &Path, opts: &RunOptions, repetitions: usize) -> Result<BenchReport> {
    let mut opts = opts.clone();
    if opts.modes.is_none() {
        opts.modes = Some(vec![TrackerMode::Fused]);
    }
    let scenario = opts.load(path)?;
    let n_frames = opts.frames.unwrap_or(300);
    let report = benchmark(&scenario, n_frames, repetitions)?;
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("timing.json"), &report)?;
    Ok(report)
}

/// Sizes the global worker pool from `PANO_TRACK_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PANO_TRACK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("PANO_TRACK_THREADS must be a positive integer, got `{raw}`")))?;
    // a pool already built by an earlier call stays in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
