use std::f32::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ExtractorKind {
    /// Cell histograms of unsigned gradient orientation.
    OrientedGradient,
    /// Every cell holds `value` in every channel; for tests.
    Constant { value: f32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureExtractorSpec {
    pub kind: ExtractorKind,
    pub channels: usize,
    /// Cell stride in pixels.
    pub cell_size: usize,
    /// Extra context, in pixels at the feature level, added around emitted boxes.
    pub receptive_pad: usize,
    /// Side of the square crop used for region descriptors.
    pub crop_size: usize,
    /// Cells whose gradient energy is below this level are attenuated instead of normalized.
    pub norm_floor: f32,
    pub clip: f32,
}

impl Default for FeatureExtractorSpec {
    fn default() -> Self {
        FeatureExtractorSpec {
            kind: ExtractorKind::OrientedGradient,
            channels: 9,
            cell_size: 8,
            receptive_pad: 0,
            crop_size: 64,
            norm_floor: 1.0,
            clip: 0.2,
        }
    }
}

impl FeatureExtractorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 1 || self.cell_size < 1 {
            return Err(Error::ConfigInvalid(
                "feature channels and cell size must be >= 1".into(),
            ));
        }
        if self.crop_size < self.cell_size {
            return Err(Error::ConfigInvalid("crop size smaller than a cell".into()));
        }
        if !(self.norm_floor > 0.0 && self.clip > 0.0) {
            return Err(Error::ConfigInvalid("norm_floor and clip must be positive".into()));
        }
        Ok(())
    }

    /// Length of a region descriptor: `(crop / cell)^2 * channels`.
    pub fn descriptor_len(&self) -> usize {
        let cells = self.crop_size / self.cell_size;
        cells * cells * self.channels
    }
}

/// Dense 3-D feature array, `rows x cols x channels`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f32>,
    /// Resampling factor of the source raster relative to the original image.
    pub scale: f64,
    pub image_id: Option<u32>,
}

impl FeatureMap {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        FeatureMap {
            rows,
            cols,
            channels,
            data: vec![0.0; rows * cols * channels],
            scale: 1.0,
            image_id: None,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols * channels {
            return Err(Error::DimensionMismatch {
                expected: rows * cols * channels,
                found: data.len(),
            });
        }
        Ok(FeatureMap {
            rows,
            cols,
            channels,
            data,
            scale: 1.0,
            image_id: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let o = (row * self.cols + col) * self.channels;
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.cols + col) * self.channels + channel]
    }

    /// Contiguous slice for columns `col..col + width` of one row.
    #[inline]
    pub fn row_span(&self, row: usize, col: usize, width: usize) -> &[f32] {
        let o = (row * self.cols + col) * self.channels;
        &self.data[o..o + width * self.channels]
    }

    /// Copy the `height x width` window at `(row, col)` into a flat row-major vector.
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Vec<f32>> {
        if row + height > self.rows || col + width > self.cols {
            return Err(Error::PlacementOutOfRange { level: 0, row, col });
        }
        let mut out = Vec::with_capacity(height * width * self.channels);
        for r in row..row + height {
            out.extend_from_slice(self.row_span(r, col, width));
        }
        Ok(out)
    }
}

/// Compute the cell feature map of a raster.
pub fn extract_features(raster: &Raster, spec: &FeatureExtractorSpec) -> Result<FeatureMap> {
    let s = spec.cell_size;
    if raster.width() < s || raster.height() < s {
        return Err(Error::RasterTooSmall {
            width: raster.width(),
            height: raster.height(),
            cell: s,
        });
    }
    let rows = raster.height() / s;
    let cols = raster.width() / s;
    match spec.kind {
        ExtractorKind::Constant { value } => {
            FeatureMap::from_vec(rows, cols, spec.channels, vec![value; rows * cols * spec.channels])
        }
        ExtractorKind::OrientedGradient => Ok(oriented_gradient(raster, rows, cols, spec)),
    }
}

fn oriented_gradient(raster: &Raster, rows: usize, cols: usize, spec: &FeatureExtractorSpec) -> FeatureMap {
    let s = spec.cell_size;
    let bins = spec.channels;
    let bin_width = PI / bins as f32;
    let mut map = FeatureMap::zeros(rows, cols, bins);
    for y in 0..rows * s {
        let row = y / s;
        for x in 0..cols * s {
            let xi = x as isize;
            let yi = y as isize;
            let dx = raster.get_clamped(xi + 1, yi) - raster.get_clamped(xi - 1, yi);
            let dy = raster.get_clamped(xi, yi + 1) - raster.get_clamped(xi, yi - 1);
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            // Unsigned orientation in [0, pi); bin k is centered on k * pi / bins.
            let mut theta = dy.atan2(dx);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let pos = theta / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as usize) % bins;
            let b1 = (b0 + 1) % bins;
            let base = (row * cols + x / s) * bins;
            map.data[base + b0] += mag * (1.0 - frac);
            map.data[base + b1] += mag * frac;
        }
    }
    for cell in map.data.chunks_mut(bins) {
        normalize_cell(cell, spec.norm_floor, spec.clip);
    }
    map
}

/// Normalize to unit length, clip, renormalize, then attenuate cells whose raw
/// energy is under `floor` by `energy / floor`. Cells at or above the floor are
/// invariant to intensity scaling.
fn normalize_cell(cell: &mut [f32], floor: f32, clip: f32) {
    let norm = cell.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm == 0.0 {
        return;
    }
    for v in cell.iter_mut() {
        *v = (*v / norm).min(clip);
    }
    let clipped = cell.iter().map(|v| v * v).sum::<f32>().sqrt();
    let gain = (norm / floor).min(1.0) / clipped;
    for v in cell.iter_mut() {
        *v *= gain;
    }
}
