//! Object extraction inside an image region: crop the organized cloud,
//! strip the floor, cluster with DBSCAN and pick the UAV cluster against the
//! previous frame's count and range.
//!
//! cargo run --example clustering

use pano_track::cluster::{dbscan, ground_removal, select_cluster, ClusterParams};
use pano_track::scan::roi_to_points;
use pano_track::sim::{Clutter, GroundTruthSample, SceneRenderer, SceneSpec};
use pano_track::{ImageRoi, Point3, Result, SensorIntrinsics};

pub fn run() -> Result<()> {
    let intr = SensorIntrinsics::default();
    // a post standing a meter behind the UAV
    let scene = SceneSpec {
        clutter: vec![Clutter::Box {
            center: Point3::new(0.0, 3.0, -0.2),
            half_extents: Point3::new(0.1, 0.1, 0.8),
        }],
        ..Default::default()
    };
    let renderer = SceneRenderer::new(scene, intr)?;
    let uav = GroundTruthSample {
        t: 0.0,
        position: Point3::new(0.0, 2.0, -0.3),
        velocity: Point3::ORIGIN,
    };
    let scan = renderer.render_frame(Some(&uav), 0);

    // a generous window around straight ahead (+y is column 256)
    let roi = ImageRoi { row_min: 40, row_max: 100, col_start: 216, col_len: 80 };
    let crop = roi_to_points(&scan, &roi);
    let params = ClusterParams::default();
    let above = ground_removal(&crop.points, &params.ground);
    println!("{} points in the window, {} above the floor", crop.len(), above.len());

    let clusters = dbscan(&above, params.eps, params.min_pts);
    for (i, c) in clusters.iter().enumerate() {
        println!(
            "cluster {i}: {:4} points, range {:.2} m, centroid ({:.2}, {:.2}, {:.2})",
            c.count, c.range, c.centroid.x, c.centroid.y, c.centroid.z
        );
    }

    // last frame saw ~75 points at 1.97 m
    let pick = select_cluster(&clusters, 75, 1.97, &params.assoc);
    match pick.cluster {
        Some(ref c) => println!(
            "flag {}: UAV at ({:.2}, {:.2}, {:.2}), truth ({:.2}, {:.2}, {:.2})",
            pick.flag(),
            c.centroid.x,
            c.centroid.y,
            c.centroid.z,
            uav.position.x,
            uav.position.y,
            uav.position.z
        ),
        None => println!("flag 0: nothing matched"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
