use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::figure::{FigureSpec, Point};
use crate::error::{Error, Result};
use crate::geometry::{clip_box, BBox};
use crate::keypoints::{Attribute, AttributeLabels, InstanceRecord, KeypointSet, Landmark, PartType};
use crate::raster::Raster;

/// Instance boxes are the visible-keypoint box grown by this fraction of its longer side.
pub const INSTANCE_BOX_PAD: f64 = 0.15;

const DISTRACTORS_AT_FULL_CLUTTER: f64 = 8.0;
const NOISE_AT_FULL_CLUTTER: f32 = 0.04;

/// A rendered image together with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub raster: Raster,
    pub instances: Vec<InstanceRecord>,
    /// Figures that produced `instances`, in the same order.
    pub figures: Vec<FigureSpec>,
    pub clutter_seed: u64,
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Segment { a: Point, b: Point, width: f64 },
    Disk { c: Point, r: f64 },
    Ring { c: Point, r: f64, width: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Stroke {
    shape: Shape,
    intensity: f32,
}

impl Shape {
    fn extent(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Segment { a, b, width } => {
                let m = width * 0.5 + 1.0;
                (a.0.min(b.0) - m, a.1.min(b.1) - m, a.0.max(b.0) + m, a.1.max(b.1) + m)
            }
            Shape::Disk { c, r } => (c.0 - r - 1.0, c.1 - r - 1.0, c.0 + r + 1.0, c.1 + r + 1.0),
            Shape::Ring { c, r, width } => {
                let m = r + width * 0.5 + 1.0;
                (c.0 - m, c.1 - m, c.0 + m, c.1 + m)
            }
        }
    }

    /// Fractional coverage of the pixel centered at `p`, using a one-pixel linear ramp.
    fn coverage(&self, p: Point) -> f32 {
        let signed = match *self {
            Shape::Segment { a, b, width } => segment_distance(p, a, b) - width * 0.5,
            Shape::Disk { c, r } => dist(p, c) - r,
            Shape::Ring { c, r, width } => (dist(p, c) - r).abs() - width * 0.5,
        };
        (0.5 - signed).clamp(0.0, 1.0) as f32
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, (a.0 + t * dx, a.1 + t * dy))
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

fn offset(p: Point, v: Point, k: f64) -> Point {
    (p.0 + v.0 * k, p.1 + v.1 * k)
}

fn draw(raster: &mut Raster, stroke: &Stroke) {
    let (x1, y1, x2, y2) = stroke.shape.extent();
    let w = raster.width() as f64;
    let h = raster.height() as f64;
    let xs = x1.floor().max(0.0) as usize;
    let ys = y1.floor().max(0.0) as usize;
    let xe = x2.ceil().min(w).max(0.0) as usize;
    let ye = y2.ceil().min(h).max(0.0) as usize;
    for y in ys..ye {
        for x in xs..xe {
            let cov = stroke.shape.coverage((x as f64 + 0.5, y as f64 + 0.5));
            if cov > 0.0 {
                let v = raster.get(x, y);
                raster.set(x, y, v + (stroke.intensity - v) * cov);
            }
        }
    }
}

fn figure_strokes(f: &FigureSpec) -> Vec<Stroke> {
    let s = f.skeleton();
    let t = f.scale;
    let w = f.stroke_width;
    let ink = f.intensity as f32;
    let mut out = Vec::new();
    let mut seg = |a: Point, b: Point, width: f64| {
        out.push(Stroke {
            shape: Shape::Segment { a, b, width },
            intensity: ink,
        })
    };

    seg(s.shoulder_mid, s.hip_mid, w);
    seg(s.shoulders[0], s.shoulders[1], w);
    seg(s.hips[0], s.hips[1], w);
    seg(s.shoulders[0], s.hips[0], w * 0.8);
    seg(s.shoulders[1], s.hips[1], w * 0.8);
    let neck_top = offset(s.head_center, s.head_up, -s.head_radius);
    seg(s.shoulder_mid, neck_top, w);
    for side in 0..2 {
        seg(s.shoulders[side], s.elbows[side], w);
        seg(s.elbows[side], s.wrists[side], w * 0.9);
        let leg_w = if f.appearance.long_pants { w * 2.2 } else { w };
        seg(s.hips[side], s.knees[side], leg_w);
        seg(s.knees[side], s.ankles[side], leg_w);
        if !f.appearance.long_pants {
            let hem = lerp(s.hips[side], s.knees[side], 0.35);
            seg(s.hips[side], hem, w * 2.2);
        }
        let toe = if s.ankles[side].0 >= s.hip_mid.0 { 1.0 } else { -1.0 };
        seg(s.ankles[side], offset(s.ankles[side], (toe, 0.0), 0.15 * t), w);
    }
    if f.appearance.long_hair {
        for side in [-1.0, 1.0] {
            let root = offset(s.head_center, s.head_right, side * s.head_radius * 0.95);
            seg(root, offset(root, s.head_up, -0.45 * t), w * 1.6);
        }
    }
    if f.appearance.has_hat {
        let brim = offset(s.head_center, s.head_up, s.head_radius * 0.9);
        seg(
            offset(brim, s.head_right, -0.4 * t),
            offset(brim, s.head_right, 0.4 * t),
            w,
        );
        seg(brim, offset(brim, s.head_up, 0.2 * t), 0.34 * t);
    }
    out.push(Stroke {
        shape: Shape::Ring {
            c: s.head_center,
            r: s.head_radius,
            width: w * 0.8,
        },
        intensity: ink,
    });
    for eye in s.eyes {
        out.push(Stroke {
            shape: Shape::Disk { c: eye, r: 0.035 * t },
            intensity: ink,
        });
    }
    out.push(Stroke {
        shape: Shape::Segment {
            a: s.nose,
            b: offset(s.nose, s.head_up, 0.07 * t),
            width: w * 0.6,
        },
        intensity: ink,
    });
    out
}

/// Ground truth for a figure on a `width` x `height` canvas, or `None` when
/// fewer than two of its landmarks land on the canvas.
pub fn instance_for(f: &FigureSpec, width: usize, height: usize) -> Option<InstanceRecord> {
    let (w, h) = (width as f64, height as f64);
    let keypoints = f.keypoints(w, h);
    if keypoints.visible_count() < 2 {
        return None;
    }
    let (x1, y1, x2, y2) = keypoints.visible_bounds()?;
    let margin = INSTANCE_BOX_PAD * (x2 - x1).max(y2 - y1);
    let bbox = BBox::new(x1 - margin, y1 - margin, x2 + margin, y2 + margin).ok()?;
    let bbox = clip_box(&bbox, w, h).ok()?;
    Some(InstanceRecord {
        bbox,
        keypoints: Some(keypoints),
        action: f.pose,
        attributes: attribute_labels(f, &keypoints),
    })
}

fn attribute_labels(f: &FigureSpec, k: &KeypointSet) -> AttributeLabels {
    let any_visible = |ls: &[Landmark]| ls.iter().any(|&l| k.get(l).visible);
    let head_seen = any_visible(&PartType::Head.landmarks()[..3]);
    let shins_seen = any_visible(&[
        Landmark::LeftKnee,
        Landmark::RightKnee,
        Landmark::LeftAnkle,
        Landmark::RightAnkle,
    ]);
    let mut labels = AttributeLabels::default();
    labels.set(Attribute::HasHat, head_seen.then_some(f.appearance.has_hat));
    labels.set(Attribute::LongHair, head_seen.then_some(f.appearance.long_hair));
    labels.set(Attribute::LongPants, shins_seen.then_some(f.appearance.long_pants));
    labels
}

/// Render figures over a cluttered background.
///
/// The background level, noise and distractor segments are drawn from `seed`;
/// with `clutter_level == 0` the background is a single flat intensity.
pub fn render(
    figures: &[FigureSpec],
    width: usize,
    height: usize,
    clutter_level: f64,
    seed: u64,
) -> Result<SynthImage> {
    if let Some(min_scale) = figures.iter().map(|f| f.scale).reduce(f64::min) {
        if (width as f64) < 4.0 * min_scale || (height as f64) < 4.0 * min_scale {
            return Err(Error::CanvasTooSmall {
                width: width as u32,
                height: height as u32,
                min_scale,
            });
        }
    }
    if !(clutter_level >= 0.0 && clutter_level.is_finite()) {
        return Err(Error::ConfigInvalid(format!("clutter level {clutter_level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background: f32 = rng.gen_range(0.55..0.9);
    let mut raster = Raster::filled(width, height, background);

    let amplitude = NOISE_AT_FULL_CLUTTER * clutter_level as f32;
    if amplitude > 0.0 {
        for v in raster.data_mut() {
            *v += rng.gen_range(-amplitude..amplitude);
        }
    }
    let distractors = (DISTRACTORS_AT_FULL_CLUTTER * clutter_level).round() as usize;
    let side = width.min(height) as f64;
    for _ in 0..distractors {
        let a = (rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64));
        let len = rng.gen_range(0.1..0.4) * side;
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let b = (a.0 + len * angle.cos(), a.1 + len * angle.sin());
        let stroke = Stroke {
            shape: Shape::Segment {
                a,
                b,
                width: rng.gen_range(2.0..6.0),
            },
            intensity: rng.gen_range(0.05..0.45),
        };
        draw(&mut raster, &stroke);
    }

    let mut instances = Vec::new();
    let mut kept = Vec::new();
    for f in figures {
        for stroke in figure_strokes(f) {
            draw(&mut raster, &stroke);
        }
        if let Some(inst) = instance_for(f, width, height) {
            instances.push(inst);
            kept.push(f.clone());
        }
    }
    raster.quantize_u8();
    Ok(SynthImage {
        raster,
        instances,
        figures: kept,
        clutter_seed: seed,
    })
}
