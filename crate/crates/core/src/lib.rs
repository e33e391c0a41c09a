//! Single-sensor UAV tracking that fuses detections in a LiDAR panoramic
//! signal image with the organized point cloud behind it.
//!
//! The pipeline per scan: detect the UAV in the signal image, crop the
//! matching pixels out of the point cloud, remove the ground, cluster with
//! DBSCAN, associate against the previous UAV cluster, and filter the
//! cluster centroid with a constant-velocity Kalman filter. When detection
//! fails the crop falls back to the region the filter predicts.
//!
//! Alongside the tracker the crate ships a synthetic scan renderer, the
//! trajectory metrics used to compare tracking modes, and a scenario runner
//! behind the `pano-track` binary.

pub mod cluster;
pub mod detect;
pub mod error;
pub mod eval;
pub mod geom;
pub mod kf;
pub mod scan;
pub mod scenario;
pub mod sim;
pub mod tracker;

pub use error::{Error, Result};
pub use geom::{PixelCoord, Point3, SensorIntrinsics};
pub use scan::{ImageRoi, PanoramicScan};
pub use tracker::{PoseEstimate, PoseSource, Tracker, TrackerMode, TrackerParams};
