//! The two reference detectors on the signal image: thresholded blobs and
//! the simulated detector whose miss rate climbs past its reliable range.
//!
//! cargo run --example blob_detection

use pano_track::detect::{detect_blob, find_blobs, BlobParams, DetectorConfig, DetectorMode};
use pano_track::detect::Detector;
use pano_track::sim::{GroundTruthSample, SceneRenderer, SceneSpec};
use pano_track::{Point3, Result, SensorIntrinsics};

pub fn run() -> Result<()> {
    let intr = SensorIntrinsics::default();
    let renderer = SceneRenderer::new(SceneSpec::default(), intr)?;
    let uav = GroundTruthSample {
        t: 0.0,
        position: Point3::new(0.5, 1.8, -0.3),
        velocity: Point3::ORIGIN,
    };
    let scan = renderer.render_frame(Some(&uav), 0);
    let truth = scan.truth.as_ref().and_then(|t| t.silhouette_roi).expect("visible");

    let params = BlobParams::default();
    let blobs = find_blobs(scan.signal_image(), &params);
    println!("{} blobs above {}", blobs.len(), params.intensity_threshold);
    let det = detect_blob(scan.signal_image(), &intr, &params)?.expect("UAV is the brightest blob");
    println!("blob detection {:?}", det.roi);
    println!("true silhouette {truth:?}");

    // Simulated detector: detection rate per range over 200 frames.
    let config = DetectorConfig { mode: DetectorMode::Simulated, ..Default::default() };
    let detector = Detector::new(config, 11)?;
    println!("range  detected");
    for r in [1.0, 2.4, 2.8, 3.2, 3.6, 5.0] {
        let pose = GroundTruthSample {
            t: 0.0,
            position: Point3::new(0.0, r, -0.3),
            velocity: Point3::ORIGIN,
        };
        let mut hits = 0;
        for i in 0..200 {
            let scan = renderer.render_frame(Some(&pose), i);
            hits += detector.detect(&scan)?.is_some() as usize;
        }
        println!("{r:5.1}  {:5.1}%", hits as f64 / 2.0);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
