//! Spherical projection linking panoramic image pixels to sensor-frame points.
//!
//! The sensor frame is x forward, y left, z up. Columns sweep azimuth
//! counter-clockwise from +x, starting at column 0; rows sweep elevation from
//! the top of the vertical field of view (row 0) down to the bottom.
//! Beams are idealized as uniform angular bins.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Resolution and envelope of a spinning LiDAR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorIntrinsics {
    /// Vertical beams.
    pub rows: usize,
    /// Horizontal samples per revolution.
    pub cols: usize,
    /// Total vertical span in radians, symmetric about the horizon.
    pub fov_vertical: f64,
    /// Revolutions per second.
    pub frame_rate: f64,
    pub max_range: f64,
    pub min_range: f64,
}

impl Default for SensorIntrinsics {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 1024,
            fov_vertical: PI / 2.0,
            frame_rate: 10.0,
            max_range: 35.0,
            min_range: 0.3,
        }
    }
}

impl SensorIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 4 {
            return Err(invalid(format!(
                "sensor needs rows >= 2 and cols >= 4, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.rows > u16::MAX as usize || self.cols > u32::MAX as usize {
            return Err(invalid("sensor resolution exceeds scan dump limits"));
        }
        if !(self.fov_vertical > 0.0 && self.fov_vertical < PI) {
            return Err(invalid("fov_vertical must lie in (0, pi)"));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(invalid("frame_rate must be positive"));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range && self.max_range.is_finite()) {
            return Err(invalid("need 0 <= min_range < max_range"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Azimuth width of one column, radians.
    pub fn col_step(&self) -> f64 {
        TAU / self.cols as f64
    }

    /// Elevation height of one row, radians.
    pub fn row_step(&self) -> f64 {
        self.fov_vertical / self.rows as f64
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Azimuth of the center of column `col`.
    pub fn col_center_azimuth(&self, col: usize) -> f64 {
        (col as f64 + 0.5) * self.col_step()
    }

    /// Elevation of the center of row `row`.
    pub fn row_center_elevation(&self, row: usize) -> f64 {
        self.fov_vertical / 2.0 - (row as f64 + 0.5) * self.row_step()
    }

    /// Unit ray through the center of every pixel, row-major.
    pub fn ray_table(&self) -> Vec<Point3> {
        let mut rays = Vec::with_capacity(self.pixel_count());
        for row in 0..self.rows {
            let phi = self.row_center_elevation(row);
            let (sp, cp) = phi.sin_cos();
            for col in 0..self.cols {
                let (st, ct) = self.col_center_azimuth(col).sin_cos();
                rays.push(Point3::new(cp * ct, cp * st, sp));
            }
        }
        rays
    }
}

/// Integer pixel location in the panoramic image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelCoord {
    pub row: usize,
    pub col: usize,
}

impl PixelCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Row-major flat index.
    pub fn index(&self, cols: usize) -> usize {
        self.row * cols + self.col
    }

    pub fn from_index(index: usize, cols: usize) -> Self {
        Self {
            row: index / cols,
            col: index % cols,
        }
    }
}

/// Point in the sensor frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Distance to the sensor origin.
    pub fn range(&self) -> f64 {
        self.norm()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let d = *self - *other;
        d.dot(&d)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Azimuth in [0, 2pi).
    pub fn azimuth(&self) -> f64 {
        let theta = self.y.atan2(self.x);
        if theta < 0.0 {
            theta + TAU
        } else {
            theta
        }
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

/// Pixel whose angular bin contains the direction of `p`.
///
/// Returns `None` when the point lies outside the range envelope or the
/// vertical field of view.
pub fn project(p: &Point3, intr: &SensorIntrinsics) -> Option<PixelCoord> {
    if !p.is_finite() {
        return None;
    }
    let range = p.range();
    if range <= 0.0 || range < intr.min_range || range > intr.max_range {
        return None;
    }
    let half_fov = intr.fov_vertical / 2.0;
    let phi = (p.z / range).clamp(-1.0, 1.0).asin();
    if phi.abs() > half_fov {
        return None;
    }
    let row = (((half_fov - phi) / intr.fov_vertical) * intr.rows as f64).floor() as usize;
    let row = row.min(intr.rows - 1);
    // azimuth may round up to exactly 2pi for tiny negative angles
    let col = ((p.azimuth() / TAU) * intr.cols as f64).floor() as usize % intr.cols;
    Some(PixelCoord { row, col })
}

/// Point at `range` along the bin-center ray of `px`.
pub fn unproject(px: PixelCoord, range: f64, intr: &SensorIntrinsics) -> Result<Point3> {
    if px.row >= intr.rows || px.col >= intr.cols {
        return Err(invalid(format!(
            "pixel ({}, {}) outside {}x{} image",
            px.row, px.col, intr.rows, intr.cols
        )));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(invalid(format!("range must be positive and finite, got {range}")));
    }
    let phi = intr.row_center_elevation(px.row);
    let theta = intr.col_center_azimuth(px.col);
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Ok(Point3::new(range * cp * ct, range * cp * st, range * sp))
}
