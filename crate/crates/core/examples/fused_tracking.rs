//! Fused tracking on the first 15 s of the 8 m spiral: detection boxes crop
//! the point cloud while the target is close, the Kalman ROI takes over once
//! the detector starts missing.
//!
//! cargo run --example fused_tracking [SCENARIO.json]

use std::path::PathBuf;

use pano_track::eval::{compute_ape, Trajectory, TrajectoryMeta, DEFAULT_MAX_DT};
use pano_track::scenario::ScenarioFile;
use pano_track::{PoseSource, Result, Tracker, TrackerMode};

pub fn run(path: Option<PathBuf>) -> Result<()> {
    let path = path.unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/spiral_8m.json")
    });
    let scenario = ScenarioFile::load(&path, &[])?;
    let n = 150.min(scenario.default_frame_count());
    let truth = scenario.frame_truth(n);
    let renderer = scenario.renderer()?;
    let mut tracker = Tracker::new(TrackerMode::Fused, scenario.detector()?, scenario.tracker_params());

    let mut traj = Trajectory::new(TrajectoryMeta {
        mode: TrackerMode::Fused,
        scenario: scenario.name.clone(),
        seed: scenario.seed,
    });
    for (i, g) in truth.iter().enumerate() {
        let scan = renderer.render_frame(Some(g), i as u32);
        if let Some(pose) = tracker.process(&scan)? {
            if i % 25 == 0 {
                let tag = match pose.source {
                    PoseSource::Measured => "measured",
                    PoseSource::Predicted => "predicted",
                };
                println!(
                    "t={:5.1}s range {:.2} m  {tag:9} {:3} pts  error {:.3} m",
                    pose.t,
                    g.position.range(),
                    pose.cluster_count,
                    pose.position.distance(&g.position)
                );
            }
            traj.samples.push(pose);
        }
    }
    let report = compute_ape(&traj, &scenario.ground_truth(n)?, DEFAULT_MAX_DT)?;
    println!(
        "{} frames: APE mean {:.3} m, rmse {:.3} m, max {:.3} m, measured {:.0}%",
        report.n_paired,
        report.total.mean,
        report.total.rmse,
        report.total.max,
        100.0 * report.measured_fraction
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run(std::env::args().nth(1).map(PathBuf::from))
}
