//! Spherical projection onto the 128x1024 image grid and back, plus ROI
//! cropping across the azimuth seam.
//!
//! cargo run --example projection

use pano_track::geom::{project, unproject};
use pano_track::scan::roi_to_points;
use pano_track::sim::{GroundTruthSample, SceneRenderer, SceneSpec};
use pano_track::{ImageRoi, Point3, Result, SensorIntrinsics};

pub fn run() -> Result<()> {
    let intr = SensorIntrinsics::default();
    println!(
        "sensor {}x{}, {:.3} deg per column, {:.3} deg per row",
        intr.rows,
        intr.cols,
        intr.col_step().to_degrees(),
        intr.row_step().to_degrees()
    );

    for p in [
        Point3::new(2.0, 0.0, -0.3),
        Point3::new(0.0, 3.0, 0.5),
        Point3::new(-1.0, -0.01, 0.0),
        Point3::new(1.0, -0.001, 0.2),
    ] {
        let px = project(&p, &intr).expect("inside the envelope");
        let back = unproject(px, p.range(), &intr)?;
        println!(
            "{:>28} -> row {:3} col {:4} -> back off by {:.4} m",
            format!("({:.3}, {:.3}, {:.3})", p.x, p.y, p.z),
            px.row,
            px.col,
            back.distance(&p)
        );
    }
    // straight up is outside the +-45 deg envelope
    println!("zenith projects to {:?}", project(&Point3::new(0.0, 0.0, 1.0), &intr));

    // A UAV sitting on the seam (azimuth ~ 0) gives a wrapping silhouette.
    let renderer = SceneRenderer::new(SceneSpec::default(), intr)?;
    let uav = GroundTruthSample {
        t: 0.0,
        position: Point3::new(1.5, 0.0, -0.3),
        velocity: Point3::ORIGIN,
    };
    let scan = renderer.render_frame(Some(&uav), 0);
    let roi = scan.truth.as_ref().and_then(|t| t.silhouette_roi).expect("UAV visible");
    let crop = roi_to_points(&scan, &roi);
    println!(
        "silhouette rows {}..={} cols start {} len {} wraps {}: {} points",
        roi.row_min,
        roi.row_max,
        roi.col_start,
        roi.col_len,
        roi.wraps(intr.cols),
        crop.len()
    );
    let wide = ImageRoi { row_min: 60, row_max: 70, col_start: 1000, col_len: 50 };
    println!("rows 60..=70, cols 1000..1023 and 0..25: {} points", roi_to_points(&scan, &wide).len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
