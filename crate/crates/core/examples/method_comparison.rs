//! Runs the bundled scenarios over several seeds and prints the per-run
//! APE of every tracking mode, mirroring the three-method comparison.
//!
//! cargo run --release --example method_comparison -- [SEEDS] [KEY=VALUE ...] [SCENARIO.json ...]

use std::path::{Path, PathBuf};

use pano_track::scenario::{track_scenario, ScenarioFile};
use pano_track::TrackerMode;

pub fn bundled() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    ["spiral_8m.json", "spiral_6m.json", "elliptical_7m.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

/// Returns how many runs had fused at or below both baselines, and the
/// number of runs.
pub fn run(seeds: u64, overrides: &[String], paths: &[PathBuf]) -> pano_track::Result<(usize, usize)> {
    let mut fused_wins = 0;
    let mut runs = 0;
    for path in paths {
        let base = ScenarioFile::load(path, overrides)?;
        for seed in 1..=seeds {
            let scenario = ScenarioFile { seed, ..base.clone() };
            let run = track_scenario(&scenario, scenario.default_frame_count(), |_| Ok(()))?;
            let mut line = format!("{:<16} seed {seed}", base.name);
            let mut means = Vec::new();
            for mode in TrackerMode::ALL {
                let r = run.report(mode)?;
                let lost = r.first_lost_range.map_or("-".to_string(), |d| format!("{d:.2}"));
                line += &format!(
                    " | {mode} {:.3}/{:.3} meas {:.2} lost@{lost} nonlost {:.2} v {:.2},{:.2},{:.2}",
                    r.total.mean,
                    r.total.rmse,
                    r.measured_fraction,
                    r.non_lost_distance,
                    r.velocity_per_axis.x.mean,
                    r.velocity_per_axis.y.mean,
                    r.velocity_per_axis.z.mean,
                );
                means.push(r.total.mean);
            }
            runs += 1;
            if means[0] <= means[1] && means[0] <= means[2] {
                fused_wins += 1;
            }
            println!("{line}");
        }
    }
    println!("fused best mean APE on {fused_wins} of {runs} runs");
    Ok((fused_wins, runs))
}

#[allow(dead_code)]
fn main() -> pano_track::Result<()> {
    let mut args = std::env::args().skip(1).peekable();
    let seeds: u64 = args.next_if(|s| s.parse::<u64>().is_ok()).map_or(5, |s| s.parse().unwrap());
    let (overrides, paths): (Vec<String>, Vec<String>) = args.partition(|a| a.contains('='));
    let mut paths: Vec<PathBuf> = paths.into_iter().map(PathBuf::from).collect();
    if paths.is_empty() {
        paths = bundled();
    }
    run(seeds, &overrides, &paths)?;
    Ok(())
}
