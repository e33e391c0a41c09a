//! Renders simulated scans and shows how the UAV's return count falls off
//! with range, then round-trips one scan through the binary dump format.
//!
//! cargo run --example render_scan

use pano_track::scan::{read_scan_dump, write_scan_dump};
use pano_track::sim::{uav_point_count_model, GroundTruthSample, SceneRenderer, SceneSpec};
use pano_track::{Point3, Result, SensorIntrinsics};

pub fn run() -> Result<()> {
    let intr = SensorIntrinsics::default();
    let scene = SceneSpec { rng_seed: 7, ..Default::default() };
    let renderer = SceneRenderer::new(scene.clone(), intr)?;

    println!("range  expected  rendered (mean of 20 frames)");
    for r in [0.5, 1.0, 2.0, 4.0, 6.0, 8.0] {
        let mut total = 0;
        for i in 0..20u32 {
            let az = 0.3 * i as f64;
            let uav = GroundTruthSample {
                t: 0.0,
                position: Point3::new(r * az.cos(), r * az.sin(), -0.3),
                velocity: Point3::ORIGIN,
            };
            let scan = renderer.render_frame(Some(&uav), i);
            total += scan.truth.map_or(0, |t| t.uav_pixels.len());
        }
        println!(
            "{r:5.1}  {:8}  {:8.1}",
            uav_point_count_model(r, scene.point_budget_k),
            total as f64 / 20.0
        );
    }

    let uav = GroundTruthSample {
        t: 0.0,
        position: Point3::new(2.0, 1.0, -0.3),
        velocity: Point3::ORIGIN,
    };
    let scan = renderer.render_frame(Some(&uav), 3);
    let mut buf = Vec::new();
    write_scan_dump(&mut buf, &scan)?;
    let back = read_scan_dump(buf.as_slice(), &intr)?;
    println!(
        "frame {}: {} valid returns, dump {} bytes, ranges survive: {}",
        scan.frame_index,
        scan.valid_count(),
        buf.len(),
        back.range == scan.range
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
