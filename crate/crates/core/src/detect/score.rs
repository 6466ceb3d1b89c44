use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeaturePyramid};
use crate::svm::LinearModel;

/// Filter responses at one pyramid level; empty when the level is smaller than the filter.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl ScoreMap {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Dot product with eight independent accumulators so the compiler can vectorize it.
#[inline]
pub(crate) fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f32; 8];
    let chunks = n / 8;
    for k in 0..chunks {
        let (x, y) = (&a[k * 8..k * 8 + 8], &b[k * 8..k * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    acc.iter().sum::<f32>() + tail
}

/// Valid cross-correlation of a `(fh, fw, C)` filter over one feature map, plus bias.
pub fn score_map(map: &FeatureMap, model: &LinearModel) -> Result<ScoreMap> {
    let [fh, fw, ch] = model.dims;
    if ch != map.channels() {
        return Err(Error::ChannelMismatch {
            model: ch,
            features: map.channels(),
        });
    }
    if map.rows() < fh || map.cols() < fw {
        return Ok(ScoreMap {
            rows: 0,
            cols: 0,
            data: Vec::new(),
        });
    }
    let rows = map.rows() - fh + 1;
    let cols = map.cols() - fw + 1;
    let span = fw * ch;
    let bias = model.bias as f32;
    let mut data = vec![bias; rows * cols];
    for i in 0..rows {
        let out = &mut data[i * cols..(i + 1) * cols];
        for r in 0..fh {
            let w = &model.weights[r * span..(r + 1) * span];
            let feat_row = map.row_span(i + r, 0, map.cols());
            for (j, o) in out.iter_mut().enumerate() {
                *o += dot_f32(w, &feat_row[j * ch..j * ch + span]);
            }
        }
    }
    Ok(ScoreMap { rows, cols, data })
}

pub fn score_pyramid(pyr: &FeaturePyramid, model: &LinearModel) -> Result<Vec<ScoreMap>> {
    pyr.levels.iter().map(|map| score_map(map, model)).collect()
}
