use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::geometry::{clip_box, BBox};

/// Single-channel image with intensities stored row-major as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        Ok(Raster { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel lookup with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Round every intensity to the nearest 8-bit level so that a PNG round trip is lossless.
    pub fn quantize_u8(&mut self) {
        for v in self.data.iter_mut() {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize).clamp(0.0, 1.0);
            Luma([(v * 255.0).round() as u8])
        })
    }

    pub fn from_gray_image(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| p.0[0] as f32 / 255.0).collect();
        Raster {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image().save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let img = image::open(path)?.into_luma8();
        Ok(Self::from_gray_image(&img))
    }

    /// Separable binomial smoothing of the given order (kernel length `order + 1`).
    pub fn binomial_smooth(&self, order: usize) -> Raster {
        if order == 0 {
            return self.clone();
        }
        let kernel = binomial_kernel(order);
        let half = (order / 2) as isize;
        let mut tmp = Raster::filled(self.width, self.height, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    acc += w * self.get_clamped(x as isize + k as isize - half, y as isize);
                }
                tmp.set(x, y, acc);
            }
        }
        let mut out = Raster::filled(self.width, self.height, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    acc += w * tmp.get_clamped(x as isize, y as isize + k as isize - half);
                }
                out.set(x, y, acc);
            }
        }
        out
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at integer + 0.5).
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = (fx - x0) as f32;
        let ay = (fy - y0) as f32;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let v00 = self.get_clamped(x0, y0);
        let v10 = self.get_clamped(x0 + 1, y0);
        let v01 = self.get_clamped(x0, y0 + 1);
        let v11 = self.get_clamped(x0 + 1, y0 + 1);
        let top = v00 + (v10 - v00) * ax;
        let bottom = v01 + (v11 - v01) * ax;
        top + (bottom - top) * ay
    }

    /// Resample so that source coordinate `p` lands at `p * scale`, producing an
    /// image of `out_w` x `out_h`. No smoothing is applied here.
    pub fn resample_bilinear(&self, scale: f64, out_w: usize, out_h: usize) -> Raster {
        Raster::from_fn(out_w, out_h, |x, y| {
            self.sample_bilinear((x as f64 + 0.5) / scale, (y as f64 + 0.5) / scale)
        })
    }

    /// Crop `bbox` (clipped to the image) and resample it to `out_w` x `out_h`.
    ///
    /// Downsampling averages the source area covered by each output pixel;
    /// upsampling interpolates bilinearly.
    pub fn crop_resize(&self, bbox: &BBox, out_w: usize, out_h: usize) -> Result<Raster> {
        let b = clip_box(bbox, self.width as f64, self.height as f64)?;
        let sx = b.width() / out_w as f64;
        let sy = b.height() / out_h as f64;
        let mut out = Raster::filled(out_w, out_h, 0.0);
        for oy in 0..out_h {
            let ya = b.y1() + oy as f64 * sy;
            for ox in 0..out_w {
                let xa = b.x1() + ox as f64 * sx;
                let v = if sx <= 1.0 && sy <= 1.0 {
                    self.sample_bilinear(xa + 0.5 * sx, ya + 0.5 * sy)
                } else {
                    self.area_average(xa, ya, xa + sx, ya + sy)
                };
                out.set(ox, oy, v);
            }
        }
        Ok(out)
    }

    /// Mean intensity over the continuous rectangle `[x1, x2) x [y1, y2)`.
    fn area_average(&self, x1: f64, y1: f64, x2: f64, y2: f64) -> f32 {
        let mut acc = 0.0f64;
        let mut total = 0.0f64;
        let px0 = x1.floor().max(0.0) as usize;
        let py0 = y1.floor().max(0.0) as usize;
        let px1 = (x2.ceil() as usize).min(self.width);
        let py1 = (y2.ceil() as usize).min(self.height);
        for py in py0..py1 {
            let wy = (y2.min(py as f64 + 1.0) - y1.max(py as f64)).max(0.0);
            if wy == 0.0 {
                continue;
            }
            for px in px0..px1 {
                let wx = (x2.min(px as f64 + 1.0) - x1.max(px as f64)).max(0.0);
                if wx == 0.0 {
                    continue;
                }
                acc += wx * wy * self.get(px, py) as f64;
                total += wx * wy;
            }
        }
        if total > 0.0 {
            (acc / total) as f32
        } else {
            self.get_clamped(x1 as isize, y1 as isize)
        }
    }
}

fn binomial_kernel(order: usize) -> Vec<f32> {
    let mut row = vec![1.0f64];
    for _ in 0..order {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let sum: f64 = row.iter().sum();
    row.iter().map(|v| (v / sum) as f32).collect()
}
