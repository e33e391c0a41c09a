//! Constant-velocity Kalman filter over 3D position and velocity, plus the
//! image-space search region it predicts when detection fails.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{project, Point3, SensorIntrinsics};
use crate::scan::ImageRoi;

pub type StateVector = SVector<f64, 6>;
pub type StateCovariance = SMatrix<f64, 6, 6>;
type Gain = SMatrix<f64, 6, 3>;
type Observation = SMatrix<f64, 3, 6>;

/// Filter state: `[px, py, pz, vx, vy, vz]` with covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub x: StateVector,
    pub p: StateCovariance,
    /// Time at which the state is valid, seconds.
    pub t: f64,
    /// Consecutive frames without an accepted measurement.
    pub misses: u32,
}

impl TrackState {
    /// State at rest at `position` with independent position and velocity
    /// variances.
    pub fn at_rest(position: Point3, t: f64, pos_var: f64, vel_var: f64) -> Self {
        let x = StateVector::from([position.x, position.y, position.z, 0.0, 0.0, 0.0]);
        let p = StateCovariance::from_diagonal(&StateVector::from([
            pos_var, pos_var, pos_var, vel_var, vel_var, vel_var,
        ]));
        Self { x, p, t, misses: 0 }
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x[0], self.x[1], self.x[2])
    }

    pub fn velocity(&self) -> Point3 {
        Point3::new(self.x[3], self.x[4], self.x[5])
    }

    pub fn position_covariance(&self) -> SMatrix<f64, 3, 3> {
        self.p.fixed_view::<3, 3>(0, 0).into_owned()
    }

    fn check_finite(&self) -> Result<()> {
        if self.x.iter().chain(self.p.iter()).all(|v| v.is_finite()) && self.t.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState("track state has non-finite entries".into()))
        }
    }
}

/// Maximum ROI size as fractions of the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoiClamp {
    pub width: f64,
    pub height: f64,
}

impl Default for RoiClamp {
    fn default() -> Self {
        Self { width: 0.25, height: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KfParams {
    /// White-acceleration standard deviation, m/s^2.
    pub q_accel: f64,
    /// Per-axis measurement standard deviation, m.
    pub r_pos: f64,
    pub roi_base_margin_px: f64,
    pub roi_growth_per_miss: f64,
    pub roi_max_fraction: RoiClamp,
    /// Standard deviations of position uncertainty added to the ROI.
    pub roi_sigma_gate: f64,
    /// Physical half-size of the target added to the ROI, m.
    pub roi_target_radius: f64,
}

impl Default for KfParams {
    fn default() -> Self {
        Self {
            q_accel: 2.0,
            r_pos: 0.05,
            roi_base_margin_px: 8.0,
            roi_growth_per_miss: 1.5,
            roi_max_fraction: RoiClamp::default(),
            roi_sigma_gate: 3.0,
            roi_target_radius: 0.3,
        }
    }
}

impl KfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_accel > 0.0 && self.r_pos > 0.0) {
            return Err(invalid("q_accel and r_pos must be positive"));
        }
        if !(self.roi_growth_per_miss >= 1.0) || !(self.roi_base_margin_px >= 0.0) {
            return Err(invalid("roi growth must be >= 1 and base margin >= 0"));
        }
        let c = &self.roi_max_fraction;
        if !(c.width > 0.0 && c.width <= 1.0 && c.height > 0.0 && c.height <= 1.0) {
            return Err(invalid("roi_max_fraction entries must lie in (0, 1]"));
        }
        if !(self.roi_sigma_gate >= 0.0 && self.roi_target_radius >= 0.0) {
            return Err(invalid("roi gate and target radius must be >= 0"));
        }
        Ok(())
    }
}

/// Constant-velocity transition over `dt`.
pub fn transition(dt: f64) -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Process noise of piecewise-constant white acceleration with standard
/// deviation `q_accel`.
pub fn process_noise(dt: f64, q_accel: f64) -> StateCovariance {
    let s2 = q_accel * q_accel;
    let (d2, d3, d4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    let mut q = StateCovariance::zeros();
    for i in 0..3 {
        q[(i, i)] = s2 * d4 / 4.0;
        q[(i, i + 3)] = s2 * d3 / 2.0;
        q[(i + 3, i)] = s2 * d3 / 2.0;
        q[(i + 3, i + 3)] = s2 * d2;
    }
    q
}

fn observation() -> Observation {
    let mut h = Observation::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

/// Propagates the state `dt` seconds ahead.
pub fn predict(s: &TrackState, dt: f64, params: &KfParams) -> Result<TrackState> {
    s.check_finite()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("predict needs dt > 0, got {dt}")));
    }
    let f = transition(dt);
    let p = f * s.p * f.transpose() + process_noise(dt, params.q_accel);
    Ok(TrackState {
        x: f * s.x,
        p: symmetrize(&p),
        t: s.t + dt,
        misses: s.misses,
    })
}

/// Fuses a position measurement; Joseph-form covariance update.
pub fn update(s: &TrackState, z: &Point3, params: &KfParams) -> Result<TrackState> {
    s.check_finite()?;
    if !z.is_finite() {
        return Err(invalid("measurement must be finite"));
    }
    let h = observation();
    let r = SMatrix::<f64, 3, 3>::identity() * (params.r_pos * params.r_pos);
    let innovation = SVector::<f64, 3>::from(z.to_array()) - h * s.x;
    let s_cov = h * s.p * h.transpose() + r;
    let s_inv = s_cov
        .try_inverse()
        .ok_or_else(|| Error::InvalidState("singular innovation covariance".into()))?;
    let k: Gain = s.p * h.transpose() * s_inv;
    let i_kh = StateCovariance::identity() - k * h;
    let p = i_kh * s.p * i_kh.transpose() + k * r * k.transpose();
    Ok(TrackState {
        x: s.x + k * innovation,
        p: symmetrize(&p),
        t: s.t,
        misses: 0,
    })
}

/// Half-width (columns) and half-height (rows) of the search region before
/// rounding and clamping, or `None` when the position is outside the sensor
/// envelope.
pub fn roi_half_extents(s: &TrackState, intr: &SensorIntrinsics, params: &KfParams) -> Option<(f64, f64)> {
    let pos = s.position();
    project(&pos, intr)?;
    let range = pos.range();
    let cos_phi = (pos.z / range).asin().cos().max(1e-3);
    let pc = s.position_covariance();
    let sigma = pc[(0, 0)].max(pc[(1, 1)]).max(pc[(2, 2)]).max(0.0).sqrt();
    let lateral = params.roi_sigma_gate * sigma + params.roi_target_radius;
    let base = params.roi_base_margin_px * params.roi_growth_per_miss.powi(s.misses as i32);
    let half_cols = base + lateral / (range * cos_phi * intr.col_step());
    let half_rows = base + lateral / (range * intr.row_step());
    Some((half_cols, half_rows))
}

/// Search region around the projected position. Falls back to the full image
/// when the position is outside the sensor envelope.
pub fn predicted_roi(s: &TrackState, intr: &SensorIntrinsics, params: &KfParams) -> ImageRoi {
    let full = ImageRoi::full(intr.rows, intr.cols);
    let Some((half_cols, half_rows)) = roi_half_extents(s, intr, params) else {
        return full;
    };
    let Some(center) = project(&s.position(), intr) else {
        return full;
    };
    let max_half_cols = ((params.roi_max_fraction.width * intr.cols as f64 - 1.0) / 2.0).max(0.0);
    let max_half_rows = ((params.roi_max_fraction.height * intr.rows as f64 - 1.0) / 2.0).max(0.0);
    let hc = half_cols.round().min(max_half_cols.floor()) as usize;
    let hr = half_rows.round().min(max_half_rows.floor()) as usize;
    let col_len = (2 * hc + 1).min(intr.cols);
    ImageRoi {
        row_min: center.row.saturating_sub(hr),
        row_max: (center.row + hr).min(intr.rows - 1),
        col_start: (center.col + intr.cols - hc % intr.cols) % intr.cols,
        col_len,
    }
}
