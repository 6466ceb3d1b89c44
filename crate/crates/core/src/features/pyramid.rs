use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::extractor::{extract_features, FeatureExtractorSpec, FeatureMap};
use crate::geometry::{clip_box, BBox};
use crate::raster::Raster;

/// Four levels per octave.
pub const DEFAULT_RATIO: f64 = 0.840_896_415_253_714_6;
pub const DEFAULT_MIN_SIDE: usize = 64;

const SIZE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidConfig {
    pub ratio: f64,
    pub min_side: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            ratio: DEFAULT_RATIO,
            min_side: DEFAULT_MIN_SIDE,
        }
    }
}

fn level_side(side: usize, scale: f64) -> usize {
    (side as f64 * scale + SIZE_EPS).floor() as usize
}

/// Binomial order whose variance matches the anti-aliasing blur for a
/// downsampling factor `f`, rounded to an even order so the kernel is centered.
fn smoothing_order(f: f64) -> usize {
    let sigma2 = (1.0 / (f * f) - 1.0) / 4.0;
    let order = (4.0 * sigma2).round() as usize;
    order + order % 2
}

/// Smoothed, resampled copies of `image` at scales `r^l`, stopping before the
/// shorter side falls under `min_side`.
pub fn gaussian_pyramid(image: &Raster, ratio: f64, min_side: usize) -> Result<Vec<Raster>> {
    if !(ratio > 0.0 && ratio < 1.0) || min_side == 0 {
        return Err(Error::ConfigInvalid(format!(
            "pyramid ratio {ratio} / min side {min_side}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    let side = w.min(h);
    if side < min_side {
        return Err(Error::ImageTooSmall { side, min_side });
    }
    let mut levels = vec![image.clone()];
    for l in 1.. {
        let f = ratio.powi(l);
        if level_side(side, f) < min_side {
            break;
        }
        let smoothed = image.binomial_smooth(smoothing_order(f));
        levels.push(smoothed.resample_bilinear(f, level_side(w, f), level_side(h, f)));
    }
    Ok(levels)
}

/// A cell-grid position for a filter at one pyramid level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement {
    pub level: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureMap>,
    pub scales: Vec<f64>,
    pub ratio: f64,
    pub cell_size: usize,
    pub receptive_pad: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub image_id: Option<u32>,
}

pub fn feature_pyramid(
    image: &Raster,
    spec: &FeatureExtractorSpec,
    ratio: f64,
    min_side: usize,
) -> Result<FeaturePyramid> {
    let rasters = gaussian_pyramid(image, ratio, min_side)?;
    let mut levels = Vec::with_capacity(rasters.len());
    let mut scales = Vec::with_capacity(rasters.len());
    for (l, r) in rasters.iter().enumerate() {
        let scale = ratio.powi(l as i32);
        let mut map = extract_features(r, spec)?;
        map.scale = scale;
        levels.push(map);
        scales.push(scale);
    }
    Ok(FeaturePyramid {
        levels,
        scales,
        ratio,
        cell_size: spec.cell_size,
        receptive_pad: spec.receptive_pad,
        image_width: image.width(),
        image_height: image.height(),
        image_id: None,
    })
}

/// [`feature_pyramid`] with parameters from a config, tagged with the image id.
pub fn build_pyramid(
    image: &Raster,
    id: u32,
    spec: &FeatureExtractorSpec,
    cfg: &PyramidConfig,
) -> Result<FeaturePyramid> {
    Ok(feature_pyramid(image, spec, cfg.ratio, cfg.min_side)?.with_image_id(id))
}

impl FeaturePyramid {
    pub fn with_image_id(mut self, id: u32) -> Self {
        self.image_id = Some(id);
        for l in &mut self.levels {
            l.image_id = Some(id);
        }
        self
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn channels(&self) -> usize {
        self.levels.first().map_or(0, |l| l.channels())
    }

    /// Image-space box covered by a `fh x fw` filter at `p`.
    pub fn cell_to_box(&self, p: Placement, fh: usize, fw: usize) -> Result<BBox> {
        let out_of_range = Error::PlacementOutOfRange {
            level: p.level,
            row: p.row,
            col: p.col,
        };
        let Some(map) = self.levels.get(p.level) else {
            return Err(out_of_range);
        };
        if p.row + fh > map.rows() || p.col + fw > map.cols() {
            return Err(out_of_range);
        }
        let s = self.cell_size as f64;
        let pad = self.receptive_pad as f64;
        let k = 1.0 / self.scales[p.level];
        let b = BBox::new(
            (p.col as f64 * s - pad) * k,
            (p.row as f64 * s - pad) * k,
            ((p.col + fw) as f64 * s + pad) * k,
            ((p.row + fh) as f64 * s + pad) * k,
        )?;
        clip_box(&b, self.image_width as f64, self.image_height as f64)
    }

    /// Placement at `level` whose filter window is centered nearest to `(x, y)`.
    pub fn point_to_cell(&self, level: usize, x: f64, y: f64, fh: usize, fw: usize) -> Option<Placement> {
        let map = self.levels.get(level)?;
        if map.rows() < fh || map.cols() < fw {
            return None;
        }
        let s = self.cell_size as f64;
        let scale = self.scales[level];
        let col = (x * scale / s - fw as f64 / 2.0).round();
        let row = (y * scale / s - fh as f64 / 2.0).round();
        let col = col.clamp(0.0, (map.cols() - fw) as f64) as usize;
        let row = row.clamp(0.0, (map.rows() - fh) as f64) as usize;
        Some(Placement { level, row, col })
    }

    /// Best placement for an image box: the level whose filter footprint best
    /// matches the box size (in log ratio), then the nearest cell to its center.
    pub fn snap_box(&self, b: &BBox, fh: usize, fw: usize) -> Option<Placement> {
        let target = b.area().sqrt();
        if target <= 0.0 {
            return None;
        }
        let footprint = ((fh * fw) as f64).sqrt() * self.cell_size as f64;
        let mut best: Option<(f64, usize)> = None;
        for (l, map) in self.levels.iter().enumerate() {
            if map.rows() < fh || map.cols() < fw {
                continue;
            }
            let d = (target / (footprint / self.scales[l])).ln().abs();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, l));
            }
        }
        let (_, level) = best?;
        let (cx, cy) = b.center();
        self.point_to_cell(level, cx, cy, fh, fw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ExtractorKind;
    use proptest::prelude::*;

    fn noise(w: usize, h: usize, seed: u64) -> Raster {
        Raster::from_fn(w, h, |x, y| {
            let mut s = (seed ^ ((y * w + x) as u64)).wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
            s ^= s >> 29;
            s = s.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            s ^= s >> 32;
            (s % 1000) as f32 / 1000.0
        })
    }

    #[test]
    fn level_sides_for_256() {
        let r = Raster::filled(256, 256, 0.5);
        let levels = gaussian_pyramid(&r, DEFAULT_RATIO, 64).unwrap();
        let sides: Vec<usize> = levels.iter().map(|l| l.width()).collect();
        // Oracle: floor(256 * 2^(-l/4)) >= 64, evaluated in closed form.
        let oracle: Vec<usize> = (0..)
            .map(|l| (256.0 * 2f64.powf(-(l as f64) / 4.0) + 1e-9).floor() as usize)
            .take_while(|&s| s >= 64)
            .collect();
        assert_eq!(sides, oracle);
        assert_eq!(sides, vec![256, 215, 181, 152, 128, 107, 90, 76, 64]);
    }

    #[test]
    fn level_zero_is_input() {
        let r = noise(100, 80, 3);
        let levels = gaussian_pyramid(&r, DEFAULT_RATIO, 64).unwrap();
        assert_eq!(levels[0], r);
    }

    #[test]
    fn small_image_rejected() {
        let r = Raster::filled(32, 32, 0.0);
        assert!(matches!(
            gaussian_pyramid(&r, DEFAULT_RATIO, 64),
            Err(Error::ImageTooSmall { side: 32, min_side: 64 })
        ));
    }

    #[test]
    fn smoothing_orders() {
        assert_eq!(smoothing_order(1.0), 0);
        assert_eq!(smoothing_order(0.5), 4);
        assert_eq!(smoothing_order(0.25), 16);
    }

    #[test]
    fn composition_and_finiteness() {
        let img = noise(120, 96, 11);
        let spec = FeatureExtractorSpec::default();
        let pyr = feature_pyramid(&img, &spec, DEFAULT_RATIO, 64).unwrap();
        let rasters = gaussian_pyramid(&img, DEFAULT_RATIO, 64).unwrap();
        assert_eq!(pyr.num_levels(), rasters.len());
        for (l, (map, r)) in pyr.levels.iter().zip(&rasters).enumerate() {
            let direct = extract_features(r, &spec).unwrap();
            assert_eq!(map.data(), direct.data());
            assert_eq!((map.rows(), map.cols()), (r.height() / 8, r.width() / 8));
            assert!(map.data().iter().all(|v| v.is_finite()));
            if l > 0 {
                assert!(pyr.scales[l] < pyr.scales[l - 1]);
            }
        }
    }

    #[test]
    fn cell_to_box_examples() {
        let spec = FeatureExtractorSpec {
            kind: ExtractorKind::Constant { value: 0.0 },
            ..FeatureExtractorSpec::default()
        };
        let pyr = feature_pyramid(&Raster::filled(256, 256, 0.0), &spec, 0.5, 64).unwrap();
        let p0 = Placement {
            level: 0,
            row: 0,
            col: 0,
        };
        assert_eq!(pyr.cell_to_box(p0, 8, 8).unwrap().to_array(), [0.0, 0.0, 64.0, 64.0]);
        let p1 = Placement { level: 1, ..p0 };
        assert_eq!(pyr.cell_to_box(p1, 8, 8).unwrap().to_array(), [0.0, 0.0, 128.0, 128.0]);
        let bad = Placement {
            level: 2,
            row: 1,
            col: 0,
        };
        assert!(matches!(
            pyr.cell_to_box(bad, 8, 8),
            Err(Error::PlacementOutOfRange { .. })
        ));
        assert!(pyr.cell_to_box(Placement { level: 9, ..p0 }, 1, 1).is_err());
    }

    #[test]
    fn snap_prefers_matching_scale() {
        let spec = FeatureExtractorSpec {
            kind: ExtractorKind::Constant { value: 0.0 },
            ..FeatureExtractorSpec::default()
        };
        let pyr = feature_pyramid(&Raster::filled(320, 320, 0.0), &spec, DEFAULT_RATIO, 64).unwrap();
        let b = BBox::new(100.0, 60.0, 228.0, 188.0).unwrap();
        let p = pyr.snap_box(&b, 8, 8).unwrap();
        assert_eq!(p.level, 4);
        let back = pyr.cell_to_box(p, 8, 8).unwrap().to_array();
        for (u, v) in back.iter().zip([96.0, 64.0, 224.0, 192.0]) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn center_round_trip(level in 0usize..9, fh in 1usize..9, fw in 1usize..9, ri in 0usize..100, ci in 0usize..100) {
            let spec = FeatureExtractorSpec {
                kind: ExtractorKind::Constant { value: 0.0 },
                ..FeatureExtractorSpec::default()
            };
            let pyr = feature_pyramid(&Raster::filled(320, 256, 0.0), &spec, DEFAULT_RATIO, 64).unwrap();
            let map = &pyr.levels[level];
            prop_assume!(map.rows() >= fh && map.cols() >= fw);
            let p = Placement { level, row: ri % (map.rows() - fh + 1), col: ci % (map.cols() - fw + 1) };
            let b = pyr.cell_to_box(p, fh, fw).unwrap();
            let (cx, cy) = b.center();
            prop_assert_eq!(pyr.point_to_cell(level, cx, cy, fh, fw), Some(p));
        }

        #[test]
        fn shape_law(w in 64usize..200, h in 64usize..200) {
            let spec = FeatureExtractorSpec {
                kind: ExtractorKind::Constant { value: 1.0 },
                ..FeatureExtractorSpec::default()
            };
            let img = Raster::filled(w, h, 0.0);
            let pyr = feature_pyramid(&img, &spec, DEFAULT_RATIO, 64).unwrap();
            for (map, &s) in pyr.levels.iter().zip(&pyr.scales) {
                prop_assert_eq!(map.rows(), level_side(h, s) / 8);
                prop_assert_eq!(map.cols(), level_side(w, s) / 8);
            }
        }
    }
}
