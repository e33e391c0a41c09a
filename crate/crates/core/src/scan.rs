//! Organized panoramic scans, image regions, and the binary scan dump.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{PixelCoord, Point3, SensorIntrinsics};

pub const DUMP_MAGIC: &[u8; 4] = b"PANO";
pub const DUMP_VERSION: u16 = 1;
pub const DUMP_HEADER_LEN: usize = 16;
const DUMP_RECORD_LEN: usize = 9;

/// Rectangular region of the panoramic image. The column interval starts at
/// `col_start` and runs `col_len` columns to the right, wrapping past the
/// 360 degree seam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRoi {
    pub row_min: usize,
    pub row_max: usize,
    pub col_start: usize,
    pub col_len: usize,
}

impl ImageRoi {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            row_min: 0,
            row_max: rows - 1,
            col_start: 0,
            col_len: cols,
        }
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.row_min > self.row_max || self.row_max >= rows {
            return Err(invalid(format!(
                "roi rows [{}, {}] invalid for {} rows",
                self.row_min, self.row_max, rows
            )));
        }
        if self.col_len == 0 || self.col_len > cols || self.col_start >= cols {
            return Err(invalid(format!(
                "roi columns start {} len {} invalid for {} cols",
                self.col_start, self.col_len, cols
            )));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    /// True when the column interval crosses the seam.
    pub fn wraps(&self, cols: usize) -> bool {
        self.col_start + self.col_len > cols
    }

    pub fn contains_col(&self, col: usize, cols: usize) -> bool {
        (col + cols - self.col_start) % cols < self.col_len
    }

    pub fn contains(&self, px: PixelCoord, cols: usize) -> bool {
        px.row >= self.row_min && px.row <= self.row_max && self.contains_col(px.col, cols)
    }

    /// Columns covered, left to right.
    pub fn columns(&self, cols: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.col_len).map(move |k| (self.col_start + k) % cols)
    }

    pub fn area(&self) -> usize {
        self.height() * self.col_len
    }

    /// Tightest seam-aware box around a set of pixels.
    ///
    /// The column interval is the shortest arc covering every occupied
    /// column: it starts right after the widest run of empty columns.
    pub fn bounding<I>(pixels: I, cols: usize) -> Option<Self>
    where
        I: IntoIterator<Item = PixelCoord>,
    {
        let mut occupied = vec![false; cols];
        let mut row_min = usize::MAX;
        let mut row_max = 0;
        let mut any = false;
        for px in pixels {
            any = true;
            occupied[px.col % cols] = true;
            row_min = row_min.min(px.row);
            row_max = row_max.max(px.row);
        }
        if !any {
            return None;
        }
        let filled: Vec<usize> = (0..cols).filter(|&c| occupied[c]).collect();
        // widest empty gap between consecutive occupied columns (cyclic)
        let mut best_gap = 0;
        let mut start = filled[0];
        for (i, &c) in filled.iter().enumerate() {
            let next = filled[(i + 1) % filled.len()];
            let gap = (next + cols - c) % cols;
            let gap = if filled.len() == 1 { cols } else { gap };
            if gap > best_gap {
                best_gap = gap;
                start = next;
            }
        }
        let col_len = cols - best_gap + 1;
        Some(Self {
            row_min,
            row_max,
            col_start: start,
            col_len: col_len.min(cols),
        })
    }
}

/// Simulation-side annotation carried alongside a rendered scan. Only the
/// simulated detector and test tooling look at it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTruth {
    pub uav_position: Point3,
    /// Box around every pixel whose ray hits the UAV body.
    pub silhouette_roi: Option<ImageRoi>,
    /// Flat indices of valid pixels returned by the UAV.
    pub uav_pixels: Vec<usize>,
}

/// One sensor revolution: signal image plus organized point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoramicScan {
    pub intrinsics: SensorIntrinsics,
    pub frame_index: u32,
    pub timestamp: f64,
    /// Per-pixel range, 0 where there is no return.
    pub range: Vec<f32>,
    pub signal: Vec<f32>,
    pub valid: Vec<bool>,
    /// Per-pixel point, origin where there is no return.
    pub points: Vec<Point3>,
    pub truth: Option<ScanTruth>,
}

impl PanoramicScan {
    /// Scan with no returns.
    pub fn empty(intrinsics: SensorIntrinsics, frame_index: u32, timestamp: f64) -> Self {
        let n = intrinsics.pixel_count();
        Self {
            intrinsics,
            frame_index,
            timestamp,
            range: vec![0.0; n],
            signal: vec![0.0; n],
            valid: vec![false; n],
            points: vec![Point3::ORIGIN; n],
            truth: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.intrinsics.rows
    }

    pub fn cols(&self) -> usize {
        self.intrinsics.cols
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn point_at(&self, px: PixelCoord) -> Option<Point3> {
        let i = px.index(self.cols());
        self.valid[i].then(|| self.points[i])
    }

    pub fn signal_image(&self) -> SignalImage<'_> {
        SignalImage {
            rows: self.rows(),
            cols: self.cols(),
            data: &self.signal,
        }
    }
}

/// Borrowed row-major signal image.
#[derive(Debug, Clone, Copy)]
pub struct SignalImage<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f32],
}

impl SignalImage<'_> {
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }
}

/// Valid points of a scan that fall inside an image region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoiPoints {
    pub points: Vec<Point3>,
    pub pixels: Vec<PixelCoord>,
}

impl RoiPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Crops the organized cloud to the pixels of `roi`, wrapping across the seam.
/// Output order is row-major within the region.
pub fn roi_to_points(scan: &PanoramicScan, roi: &ImageRoi) -> RoiPoints {
    let (rows, cols) = (scan.rows(), scan.cols());
    let mut out = RoiPoints::default();
    if roi.row_min >= rows || roi.col_len == 0 {
        return out;
    }
    let row_max = roi.row_max.min(rows - 1);
    let col_len = roi.col_len.min(cols);
    let col_start = roi.col_start % cols;
    for row in roi.row_min..=row_max {
        for k in 0..col_len {
            let col = (col_start + k) % cols;
            let i = row * cols + col;
            if scan.valid[i] {
                out.points.push(scan.points[i]);
                out.pixels.push(PixelCoord { row, col });
            }
        }
    }
    out
}

/// Writes a scan as a 16-byte little-endian header followed by row-major
/// `(range: f32, signal: f32, valid: u8)` records.
pub fn write_scan_dump<W: Write>(mut w: W, scan: &PanoramicScan) -> Result<()> {
    let intr = &scan.intrinsics;
    let rows = u16::try_from(intr.rows).map_err(|_| invalid("rows exceed u16"))?;
    let cols = u32::try_from(intr.cols).map_err(|_| invalid("cols exceed u32"))?;
    let mut buf = Vec::with_capacity(DUMP_HEADER_LEN + intr.pixel_count() * DUMP_RECORD_LEN);
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    buf.extend_from_slice(&scan.frame_index.to_le_bytes());
    for i in 0..intr.pixel_count() {
        buf.extend_from_slice(&scan.range[i].to_le_bytes());
        buf.extend_from_slice(&scan.signal[i].to_le_bytes());
        buf.push(scan.valid[i] as u8);
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a scan dump. Points are rebuilt along bin-center rays; the header's
/// resolution must match `intrinsics`.
pub fn read_scan_dump<R: Read>(mut r: R, intrinsics: &SensorIntrinsics) -> Result<PanoramicScan> {
    let mut header = [0u8; DUMP_HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != DUMP_MAGIC {
        return Err(Error::ScanFormat("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != DUMP_VERSION {
        return Err(Error::ScanFormat(format!("unsupported version {version}")));
    }
    let rows = u16::from_le_bytes([header[6], header[7]]) as usize;
    let cols = u32::from_le_bytes([header[8], header[9], header[10], header[11]]) as usize;
    let frame_index = u32::from_le_bytes([header[12], header[13], header[14], header[15]]);
    if rows != intrinsics.rows || cols != intrinsics.cols {
        return Err(Error::ScanFormat(format!(
            "dump is {rows}x{cols}, sensor is {}x{}",
            intrinsics.rows, intrinsics.cols
        )));
    }
    let mut body = vec![0u8; rows * cols * DUMP_RECORD_LEN];
    r.read_exact(&mut body)?;

    let rays = intrinsics.ray_table();
    let timestamp = frame_index as f64 * intrinsics.frame_period();
    let mut scan = PanoramicScan::empty(*intrinsics, frame_index, timestamp);
    for (i, rec) in body.chunks_exact(DUMP_RECORD_LEN).enumerate() {
        let range = f32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]);
        let signal = f32::from_le_bytes([rec[4], rec[5], rec[6], rec[7]]);
        let valid = match rec[8] {
            0 => false,
            1 => true,
            v => return Err(Error::ScanFormat(format!("validity byte {v} at pixel {i}"))),
        };
        scan.range[i] = range;
        scan.signal[i] = signal;
        scan.valid[i] = valid;
        if valid {
            scan.points[i] = rays[i] * range as f64;
        }
    }
    Ok(scan)
}
