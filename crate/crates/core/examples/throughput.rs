//! Times tracker steps on pre-rendered full-resolution scans.
//!
//! cargo run --release --example throughput [FRAMES]

use std::path::Path;

use pano_track::scenario::{benchmark, ScenarioFile};
use pano_track::{Result, TrackerMode};

pub fn run(frames: usize) -> Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/spiral_6m.json");
    let scenario = ScenarioFile {
        modes: vec![TrackerMode::Fused, TrackerMode::PcdOnly],
        ..ScenarioFile::load(&path, &[])?
    };
    let report = benchmark(&scenario, frames, 1)?;
    println!("{}x{} scans, {} frames", report.rows, report.cols, report.n_frames);
    for (mode, t) in &report.aggregate {
        println!(
            "{mode:>10}: mean {:.2} ms  p95 {:.2} ms  {:.0} fps",
            t.mean_frame_ms, t.p95_frame_ms, t.effective_fps
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let frames = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    run(frames)
}
