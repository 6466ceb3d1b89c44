//! Stick-figure kinematics.
//!
//! Limb angles are absolute directions measured from "straight down" and
//! increase towards +x, so a limb with angle `a` points along `(sin a, cos a)`
//! in image coordinates. The person's left side is drawn at +x.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::keypoints::{Action, Keypoint, KeypointSet, Landmark};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// Angle priors for one pose class. Arm and leg ranges are magnitudes; the
/// sampler assigns signs per side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRanges {
    pub hip: Interval,
    pub knee: Interval,
    pub shoulder: Interval,
    pub elbow: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureConfig {
    /// Torso length in pixels.
    pub scale: Interval,
    /// Stroke width as a fraction of the torso length.
    pub stroke: Interval,
    pub intensity: Interval,
    pub neck_tilt: Interval,
    pub head_yaw: Interval,
    pub lean: Interval,
    pub shoulder_width: Interval,
    pub standing: PoseRanges,
    pub walking: PoseRanges,
    pub sitting: PoseRanges,
    pub arms_raised: PoseRanges,
    pub hat_prior: f64,
    pub long_hair_prior: f64,
    pub long_pants_prior: f64,
}

impl Default for FigureConfig {
    fn default() -> Self {
        let standing_legs = (Interval::new(-0.02, 0.06), Interval::new(-0.05, 0.05));
        FigureConfig {
            scale: Interval::new(64.0, 80.0),
            stroke: Interval::new(0.05, 0.08),
            intensity: Interval::new(0.05, 0.35),
            neck_tilt: Interval::new(-0.35, 0.35),
            head_yaw: Interval::new(-0.8, 0.8),
            lean: Interval::new(-0.12, 0.12),
            shoulder_width: Interval::new(0.8, 1.1),
            standing: PoseRanges {
                hip: standing_legs.0,
                knee: standing_legs.1,
                shoulder: Interval::new(0.15, 0.5),
                elbow: Interval::new(0.0, 0.3),
            },
            walking: PoseRanges {
                hip: Interval::new(0.1, 0.2),
                knee: Interval::new(-0.15, 0.15),
                shoulder: Interval::new(0.15, 0.5),
                elbow: Interval::new(0.0, 0.3),
            },
            sitting: PoseRanges {
                hip: Interval::new(0.8, 1.2),
                knee: Interval::new(0.8, 1.3),
                shoulder: Interval::new(0.2, 0.7),
                elbow: Interval::new(0.0, 0.4),
            },
            arms_raised: PoseRanges {
                hip: standing_legs.0,
                knee: standing_legs.1,
                shoulder: Interval::new(0.75, 1.1),
                elbow: Interval::new(-0.3, 0.3),
            },
            hat_prior: 0.5,
            long_hair_prior: 0.5,
            long_pants_prior: 0.5,
        }
    }
}

impl FigureConfig {
    pub fn ranges(&self, pose: Action) -> &PoseRanges {
        match pose {
            Action::Standing => &self.standing,
            Action::Walking => &self.walking,
            Action::Sitting => &self.sitting,
            Action::ArmsRaised => &self.arms_raised,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct JointAngles {
    pub neck: f64,
    pub head_yaw: f64,
    pub lean: f64,
    pub shoulder_left: f64,
    pub shoulder_right: f64,
    pub elbow_left: f64,
    pub elbow_right: f64,
    pub hip_left: f64,
    pub hip_right: f64,
    pub knee_left: f64,
    pub knee_right: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Appearance {
    pub has_hat: bool,
    pub long_hair: bool,
    pub long_pants: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    /// Hip midpoint in pixels.
    pub anchor: (f64, f64),
    /// Torso length in pixels.
    pub scale: f64,
    pub joints: JointAngles,
    pub shoulder_width: f64,
    pub pose: Action,
    pub appearance: Appearance,
    pub stroke_width: f64,
    pub intensity: f64,
}

/// Sample a figure of the given pose class at the origin. Deterministic in `seed`.
pub fn sample_figure(seed: u64, pose: Action, config: &FigureConfig) -> FigureSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_figure_with(&mut rng, pose, config)
}

pub(crate) fn sample_figure_with(rng: &mut impl Rng, pose: Action, config: &FigureConfig) -> FigureSpec {
    let scale = config.scale.sample(rng);
    let r = config.ranges(pose);
    let mut j = JointAngles {
        neck: config.neck_tilt.sample(rng),
        head_yaw: config.head_yaw.sample(rng),
        lean: config.lean.sample(rng),
        ..JointAngles::default()
    };
    match pose {
        Action::Standing | Action::ArmsRaised => {
            j.hip_left = r.hip.sample(rng);
            j.hip_right = -r.hip.sample(rng);
            j.knee_left = r.knee.sample(rng);
            j.knee_right = r.knee.sample(rng);
            j.shoulder_left = r.shoulder.sample(rng);
            j.shoulder_right = -r.shoulder.sample(rng);
            j.elbow_left = r.elbow.sample(rng);
            j.elbow_right = -r.elbow.sample(rng);
        }
        Action::Walking => {
            // +1 straddles, -1 crosses the legs.
            let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            j.hip_left = s * r.hip.sample(rng);
            j.hip_right = -s * r.hip.sample(rng);
            j.knee_left = r.knee.sample(rng);
            j.knee_right = r.knee.sample(rng);
            j.shoulder_left = r.shoulder.sample(rng);
            j.shoulder_right = -r.shoulder.sample(rng);
            j.elbow_left = r.elbow.sample(rng);
            j.elbow_right = -r.elbow.sample(rng);
        }
        Action::Sitting => {
            let facing = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            j.hip_left = facing * r.hip.sample(rng);
            j.hip_right = facing * r.hip.sample(rng);
            j.knee_left = -facing * r.knee.sample(rng);
            j.knee_right = -facing * r.knee.sample(rng);
            j.shoulder_left = facing * r.shoulder.sample(rng);
            j.shoulder_right = facing * r.shoulder.sample(rng);
            j.elbow_left = facing * r.elbow.sample(rng);
            j.elbow_right = facing * r.elbow.sample(rng);
        }
    }
    let appearance = Appearance {
        has_hat: rng.gen_bool(config.hat_prior),
        long_hair: rng.gen_bool(config.long_hair_prior),
        long_pants: rng.gen_bool(config.long_pants_prior),
    };
    FigureSpec {
        anchor: (0.0, 0.0),
        scale,
        shoulder_width: config.shoulder_width.sample(rng),
        joints: j,
        pose,
        appearance,
        stroke_width: config.stroke.sample(rng) * scale,
        intensity: config.intensity.sample(rng),
    }
}

/// Recover the pose class from joint angles alone.
pub fn classify_pose(j: &JointAngles) -> Action {
    let hip_mean = (j.hip_left.abs() + j.hip_right.abs()) * 0.5;
    if hip_mean > 0.5 {
        Action::Sitting
    } else if (j.hip_left - j.hip_right).abs() > 0.16 {
        Action::Walking
    } else if j.shoulder_left.abs().min(j.shoulder_right.abs()) > 0.62 {
        Action::ArmsRaised
    } else {
        Action::Standing
    }
}

pub(crate) type Point = (f64, f64);

#[inline]
pub(crate) fn dir(angle: f64) -> Point {
    (angle.sin(), angle.cos())
}

#[inline]
fn add(p: Point, v: Point, k: f64) -> Point {
    (p.0 + v.0 * k, p.1 + v.1 * k)
}

/// Every joint position of a figure, in pixels.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Skeleton {
    pub hip_mid: Point,
    pub shoulder_mid: Point,
    pub shoulders: [Point; 2],
    pub hips: [Point; 2],
    pub elbows: [Point; 2],
    pub wrists: [Point; 2],
    pub knees: [Point; 2],
    pub ankles: [Point; 2],
    pub head_center: Point,
    pub head_radius: f64,
    /// Unit vector from the neck towards the top of the head.
    pub head_up: Point,
    /// Unit vector towards the person's left within the head frame.
    pub head_right: Point,
    pub eyes: [Point; 2],
    pub nose: Point,
}

impl FigureSpec {
    pub(crate) fn skeleton(&self) -> Skeleton {
        let t = self.scale;
        let j = &self.joints;
        let up = (j.lean.sin(), -j.lean.cos());
        let right = (j.lean.cos(), j.lean.sin());
        let hip_mid = self.anchor;
        let shoulder_mid = add(hip_mid, up, t);
        let sw = self.shoulder_width;
        let shoulders = [
            add(shoulder_mid, right, 0.4 * t * sw),
            add(shoulder_mid, right, -0.4 * t * sw),
        ];
        let hips = [add(hip_mid, right, 0.25 * t * sw), add(hip_mid, right, -0.25 * t * sw)];

        let arm = |s: Point, a: f64, e: f64| {
            let elbow = add(s, dir(a), 0.42 * t);
            (elbow, add(elbow, dir(a + e), 0.38 * t))
        };
        let (el, wl) = arm(shoulders[0], j.shoulder_left, j.elbow_left);
        let (er, wr) = arm(shoulders[1], j.shoulder_right, j.elbow_right);
        let leg = |h: Point, a: f64, k: f64| {
            let knee = add(h, dir(a), 0.55 * t);
            (knee, add(knee, dir(a + k), 0.55 * t))
        };
        let (kl, al) = leg(hips[0], j.hip_left, j.knee_left);
        let (kr, ar) = leg(hips[1], j.hip_right, j.knee_right);

        let head_angle = j.lean + j.neck;
        let head_up = (head_angle.sin(), -head_angle.cos());
        let head_right = (head_angle.cos(), head_angle.sin());
        let head_center = add(shoulder_mid, head_up, 0.45 * t);
        let yaw = j.head_yaw * 0.1 * t;
        let eye = |side: f64| add(add(head_center, head_right, side * 0.1 * t + yaw), head_up, 0.05 * t);
        let nose = add(add(head_center, head_right, yaw * 1.4), head_up, -0.04 * t);

        Skeleton {
            hip_mid,
            shoulder_mid,
            shoulders,
            hips,
            elbows: [el, er],
            wrists: [wl, wr],
            knees: [kl, kr],
            ankles: [al, ar],
            head_center,
            head_radius: 0.26 * t,
            head_up,
            head_right,
            eyes: [eye(1.0), eye(-1.0)],
            nose,
        }
    }

    /// Landmarks of the figure; those outside a `width` x `height` canvas are invisible.
    pub fn keypoints(&self, width: f64, height: f64) -> KeypointSet {
        let s = self.skeleton();
        let mut k = KeypointSet::default();
        let pts = [
            (Landmark::LeftEye, s.eyes[0]),
            (Landmark::RightEye, s.eyes[1]),
            (Landmark::Nose, s.nose),
            (Landmark::LeftShoulder, s.shoulders[0]),
            (Landmark::RightShoulder, s.shoulders[1]),
            (Landmark::LeftHip, s.hips[0]),
            (Landmark::RightHip, s.hips[1]),
            (Landmark::LeftKnee, s.knees[0]),
            (Landmark::RightKnee, s.knees[1]),
            (Landmark::LeftAnkle, s.ankles[0]),
            (Landmark::RightAnkle, s.ankles[1]),
        ];
        for (l, (x, y)) in pts {
            let inside = x >= 0.0 && x < width && y >= 0.0 && y < height;
            k.set(
                l,
                if inside {
                    Keypoint::visible(x, y)
                } else {
                    Keypoint { x, y, visible: false }
                },
            );
        }
        k
    }
}
