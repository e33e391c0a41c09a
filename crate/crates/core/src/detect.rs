//! Image-space UAV detection on the panoramic signal image.
//!
//! Two detectors sit behind one interface: a blob detector (threshold,
//! seam-aware connected components, area filter) and a simulated detector
//! that reads the renderer's ground-truth silhouette and misses with a
//! range-dependent probability.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::{PixelCoord, SensorIntrinsics};
use crate::scan::{PanoramicScan, SignalImage};
use crate::sim::frame_seed;

pub use crate::scan::ImageRoi;

const DETECTOR_SALT: u64 = 0xD37E_C7ED_5EED_0001;

/// A single image-space detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub roi: ImageRoi,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    Blob,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobParams {
    pub intensity_threshold: f32,
    pub min_area_px: usize,
    pub max_area_px: usize,
    /// Mask dilation radius used to bridge sparse returns.
    pub dilation_px: usize,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            intensity_threshold: 0.5,
            min_area_px: 1,
            max_area_px: 50_000,
            dilation_px: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatedParams {
    pub max_reliable_range: f64,
    /// `[range, miss probability]` knots, linearly interpolated and held
    /// flat outside. Defaults to 0 up to `max_reliable_range`, rising to 1
    /// at 1.5x that range.
    pub miss_curve: Option<Vec<[f64; 2]>>,
    pub bbox_jitter_px: usize,
}

impl Default for SimulatedParams {
    fn default() -> Self {
        Self {
            max_reliable_range: 2.4,
            miss_curve: None,
            bbox_jitter_px: 1,
        }
    }
}

impl SimulatedParams {
    pub fn curve(&self) -> MissCurve {
        match &self.miss_curve {
            Some(knots) => MissCurve {
                knots: knots.iter().map(|k| (k[0], k[1])).collect(),
            },
            None => MissCurve::soft_cliff(self.max_reliable_range),
        }
    }
}

/// Piecewise-linear probability of missing the UAV as a function of range.
#[derive(Debug, Clone, PartialEq)]
pub struct MissCurve {
    knots: Vec<(f64, f64)>,
}

impl MissCurve {
    pub fn soft_cliff(max_reliable_range: f64) -> Self {
        Self {
            knots: vec![(max_reliable_range, 0.0), (1.5 * max_reliable_range, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(invalid("miss curve needs at least one knot"));
        }
        for w in self.knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid("miss curve ranges must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(invalid("miss curve must be non-decreasing in range"));
            }
        }
        if self.knots.iter().any(|&(r, p)| !(r.is_finite() && (0.0..=1.0).contains(&p))) {
            return Err(invalid("miss probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn miss_probability(&self, range: f64) -> f64 {
        let k = &self.knots;
        if range <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((r0, p0), (r1, p1)) = (w[0], w[1]);
            if range <= r1 {
                return p0 + (p1 - p0) * (range - r0) / (r1 - r0);
            }
        }
        k[k.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    pub blob: BlobParams,
    pub simulated: SimulatedParams,
    /// Extra random miss probability applied on top of either mode.
    pub dropout_prob: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mode: DetectorMode::Simulated,
            blob: BlobParams::default(),
            simulated: SimulatedParams::default(),
            dropout_prob: 0.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.blob;
        if !(b.intensity_threshold > 0.0) || b.min_area_px == 0 || b.max_area_px < b.min_area_px {
            return Err(invalid("blob thresholds must be positive with min_area <= max_area"));
        }
        if !(self.simulated.max_reliable_range > 0.0) {
            return Err(invalid("max_reliable_range must be positive"));
        }
        self.simulated.curve().validate()?;
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(invalid("detector dropout_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Configured detector. Deterministic per frame: any randomness is drawn
/// from a generator seeded by `(seed, frame_index)`.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    curve: MissCurve,
    seed: u64,
}

impl Detector {
    pub fn new(config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let curve = config.simulated.curve();
        Ok(Self { config, curve, seed })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn detect(&self, scan: &PanoramicScan) -> Result<Option<Detection>> {
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(self.seed ^ DETECTOR_SALT, scan.frame_index));
        let det = match self.config.mode {
            DetectorMode::Blob => detect_blob(scan.signal_image(), &scan.intrinsics, &self.config.blob)?,
            DetectorMode::Simulated => self.simulate(scan, &mut rng),
        };
        if det.is_some() && self.config.dropout_prob > 0.0 && rng.random::<f64>() < self.config.dropout_prob {
            return Ok(None);
        }
        Ok(det)
    }

    fn simulate(&self, scan: &PanoramicScan, rng: &mut ChaCha8Rng) -> Option<Detection> {
        let truth = scan.truth.as_ref()?;
        let roi = truth.silhouette_roi?;
        let p_miss = self.curve.miss_probability(truth.uav_position.range());
        if rng.random::<f64>() < p_miss {
            return None;
        }
        let roi = jitter_roi(roi, self.config.simulated.bbox_jitter_px, scan.rows(), scan.cols(), rng);
        Some(Detection {
            roi,
            confidence: 1.0 - p_miss,
        })
    }
}

fn jitter_roi<R: Rng>(roi: ImageRoi, jitter: usize, rows: usize, cols: usize, rng: &mut R) -> ImageRoi {
    if jitter == 0 {
        return roi;
    }
    let j = jitter as i64;
    let mut d = || rng.random_range(-j..=j);
    let top = (roi.row_min as i64 + d()).clamp(0, rows as i64 - 1);
    let bottom = (roi.row_max as i64 + d()).clamp(top, rows as i64 - 1);
    let left = roi.col_start as i64 + d();
    let right = roi.col_start as i64 + roi.col_len as i64 - 1 + d();
    let len = (right - left + 1).clamp(1, cols as i64);
    ImageRoi {
        row_min: top as usize,
        row_max: bottom as usize,
        col_start: left.rem_euclid(cols as i64) as usize,
        col_len: len as usize,
    }
}

/// One thresholded connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub roi: ImageRoi,
    /// Above-threshold pixels in the component.
    pub area: usize,
    pub mean_intensity: f32,
    pub peak: PixelCoord,
}

/// All components of the thresholded signal image that pass the area filter.
/// Columns wrap across the seam; rows do not.
pub fn find_blobs(image: SignalImage<'_>, params: &BlobParams) -> Vec<Blob> {
    let (rows, cols) = (image.rows, image.cols);
    let n = rows * cols;
    let bright: Vec<usize> = (0..n)
        .filter(|&i| image.data[i] >= params.intensity_threshold)
        .collect();
    if bright.is_empty() {
        return Vec::new();
    }
    let r = params.dilation_px as i64;
    let mut mask = vec![false; n];
    for &i in &bright {
        let (row, col) = ((i / cols) as i64, (i % cols) as i64);
        for dr in -r..=r {
            let rr = row + dr;
            if rr < 0 || rr >= rows as i64 {
                continue;
            }
            for dc in -r..=r {
                let cc = (col + dc).rem_euclid(cols as i64);
                mask[rr as usize * cols + cc as usize] = true;
            }
        }
    }

    let mut label = vec![u32::MAX; n];
    let mut blobs = Vec::new();
    let mut queue = VecDeque::new();
    for &seed in &bright {
        if label[seed] != u32::MAX {
            continue;
        }
        let id = blobs.len() as u32;
        label[seed] = id;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            if image.data[i] >= params.intensity_threshold {
                members.push(i);
            }
            let (row, col) = ((i / cols) as i64, (i % cols) as i64);
            for dr in -1..=1i64 {
                let rr = row + dr;
                if rr < 0 || rr >= rows as i64 {
                    continue;
                }
                for dc in -1..=1i64 {
                    let j = rr as usize * cols + (col + dc).rem_euclid(cols as i64) as usize;
                    if mask[j] && label[j] == u32::MAX {
                        label[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        members.sort_unstable();
        let sum: f64 = members.iter().map(|&i| image.data[i] as f64).sum();
        let peak = *members
            .iter()
            .max_by(|&&a, &&b| image.data[a].total_cmp(&image.data[b]).then(b.cmp(&a)))
            .unwrap();
        let roi = ImageRoi::bounding(members.iter().map(|&i| PixelCoord::from_index(i, cols)), cols).unwrap();
        blobs.push(Blob {
            roi,
            area: members.len(),
            mean_intensity: (sum / members.len() as f64) as f32,
            peak: PixelCoord::from_index(peak, cols),
        });
    }
    blobs.retain(|b| b.area >= params.min_area_px && b.area <= params.max_area_px);
    blobs
}

/// Best blob as a detection: highest mean intensity, then larger area, then
/// smaller `row_min`, then smaller `col_start`.
pub fn detect_blob(
    image: SignalImage<'_>,
    intr: &SensorIntrinsics,
    params: &BlobParams,
) -> Result<Option<Detection>> {
    if image.rows != intr.rows || image.cols != intr.cols || image.data.len() != intr.pixel_count() {
        return Err(invalid(format!(
            "signal image {}x{} ({} px) does not match sensor {}x{}",
            image.rows,
            image.cols,
            image.data.len(),
            intr.rows,
            intr.cols
        )));
    }
    let best = find_blobs(image, params).into_iter().min_by(|a, b| {
        b.mean_intensity
            .total_cmp(&a.mean_intensity)
            .then(b.area.cmp(&a.area))
            .then(a.roi.row_min.cmp(&b.roi.row_min))
            .then(a.roi.col_start.cmp(&b.roi.col_start))
    });
    Ok(best.map(|b| Detection {
        roi: b.roi,
        confidence: (b.mean_intensity as f64).clamp(0.0, 1.0),
    }))
}
