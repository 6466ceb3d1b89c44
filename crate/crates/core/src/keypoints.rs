//! Keypoint schema, body-part types, instance records and label spaces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{clip_box, BBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Landmark {
    LeftEye,
    RightEye,
    Nose,
    LeftShoulder,
    RightShoulder,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl Landmark {
    pub const COUNT: usize = 11;

    pub const ALL: [Landmark; Landmark::COUNT] = [
        Landmark::LeftEye,
        Landmark::RightEye,
        Landmark::Nose,
        Landmark::LeftShoulder,
        Landmark::RightShoulder,
        Landmark::LeftHip,
        Landmark::RightHip,
        Landmark::LeftKnee,
        Landmark::RightKnee,
        Landmark::LeftAnkle,
        Landmark::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Landmark::LeftEye => "left_eye",
            Landmark::RightEye => "right_eye",
            Landmark::Nose => "nose",
            Landmark::LeftShoulder => "left_shoulder",
            Landmark::RightShoulder => "right_shoulder",
            Landmark::LeftHip => "left_hip",
            Landmark::RightHip => "right_hip",
            Landmark::LeftKnee => "left_knee",
            Landmark::RightKnee => "right_knee",
            Landmark::LeftAnkle => "left_ankle",
            Landmark::RightAnkle => "right_ankle",
        }
    }

    pub fn from_name(name: &str) -> Option<Landmark> {
        Landmark::ALL.iter().copied().find(|l| l.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartType {
    Head,
    Torso,
    Legs,
}

impl PartType {
    pub const ALL: [PartType; 3] = [PartType::Head, PartType::Torso, PartType::Legs];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PartType::Head => "head",
            PartType::Torso => "torso",
            PartType::Legs => "legs",
        }
    }

    /// Landmarks that define this part, in the fixed order used for normalization.
    pub fn landmarks(self) -> &'static [Landmark] {
        use Landmark::*;
        match self {
            PartType::Head => &[LeftEye, RightEye, Nose, LeftShoulder, RightShoulder],
            PartType::Torso => &[LeftShoulder, RightShoulder, LeftHip, RightHip],
            PartType::Legs => &[LeftHip, RightHip, LeftKnee, RightKnee, LeftAnkle, RightAnkle],
        }
    }
}

impl fmt::Display for PartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn visible(x: f64, y: f64) -> Self {
        Keypoint { x, y, visible: true }
    }

    pub fn hidden() -> Self {
        Keypoint::default()
    }
}

/// The 11 landmarks of one person. Serialized as `{name: [x, y, visible]}`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct KeypointSet {
    points: [Keypoint; Landmark::COUNT],
}

impl KeypointSet {
    pub fn new(points: [Keypoint; Landmark::COUNT]) -> Self {
        KeypointSet { points }
    }

    pub fn get(&self, l: Landmark) -> Keypoint {
        self.points[l.index()]
    }

    pub fn set(&mut self, l: Landmark, kp: Keypoint) {
        self.points[l.index()] = kp;
    }

    pub fn points(&self) -> &[Keypoint; Landmark::COUNT] {
        &self.points
    }

    pub fn visible_count(&self) -> usize {
        self.points.iter().filter(|p| p.visible).count()
    }

    /// Visible landmarks of the given part, in the part's landmark order.
    pub fn part_points(&self, part: PartType) -> Vec<(Landmark, Keypoint)> {
        part.landmarks()
            .iter()
            .map(|&l| (l, self.get(l)))
            .filter(|(_, k)| k.visible)
            .collect()
    }

    /// Bounding box of all visible landmarks.
    pub fn visible_bounds(&self) -> Option<(f64, f64, f64, f64)> {
        bounds(self.points.iter().filter(|p| p.visible))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> KeypointSet {
        let mut out = *self;
        for p in out.points.iter_mut() {
            p.x += dx;
            p.y += dy;
        }
        out
    }
}

fn bounds<'a>(pts: impl Iterator<Item = &'a Keypoint>) -> Option<(f64, f64, f64, f64)> {
    pts.fold(None, |acc, p| {
        Some(match acc {
            None => (p.x, p.y, p.x, p.y),
            Some((x1, y1, x2, y2)) => (x1.min(p.x), y1.min(p.y), x2.max(p.x), y2.max(p.y)),
        })
    })
}

impl Serialize for KeypointSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, (f64, f64, bool)> = Landmark::ALL
            .iter()
            .map(|&l| {
                let k = self.get(l);
                (l.name(), (k.x, k.y, k.visible))
            })
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeypointSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, (f64, f64, bool)>::deserialize(d)?;
        let mut set = KeypointSet::default();
        for (name, (x, y, visible)) in map {
            let l = Landmark::from_name(&name)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown landmark {name}")))?;
            if visible && !(x.is_finite() && y.is_finite()) {
                return Err(serde::de::Error::custom(format!("non-finite landmark {name}")));
            }
            set.set(l, Keypoint { x, y, visible });
        }
        Ok(set)
    }
}

/// Tight box around the visible landmarks of `part`, each side pushed out by
/// `pad * max(width, height)`. The result is not clipped; see [`part_box_in_image`].
pub fn box_from_keypoints(k: &KeypointSet, part: PartType, pad: f64) -> Result<BBox> {
    let pts = k.part_points(part);
    if pts.len() < 2 {
        return Err(Error::InsufficientKeypoints(part.name()));
    }
    let (x1, y1, x2, y2) = bounds(pts.iter().map(|(_, p)| p)).expect("non-empty");
    let margin = pad * (x2 - x1).max(y2 - y1);
    BBox::new(x1 - margin, y1 - margin, x2 + margin, y2 + margin)
}

/// [`box_from_keypoints`] followed by clipping to a `width` x `height` image.
pub fn part_box_in_image(k: &KeypointSet, part: PartType, pad: f64, width: f64, height: f64) -> Result<BBox> {
    clip_box(&box_from_keypoints(k, part, pad)?, width, height)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Standing,
    Sitting,
    Walking,
    ArmsRaised,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Standing, Action::Sitting, Action::Walking, Action::ArmsRaised];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Standing => "standing",
            Action::Sitting => "sitting",
            Action::Walking => "walking",
            Action::ArmsRaised => "arms_raised",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    HasHat,
    LongHair,
    LongPants,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::HasHat, Attribute::LongHair, Attribute::LongPants];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::HasHat => "has_hat",
            Attribute::LongHair => "long_hair",
            Attribute::LongPants => "long_pants",
        }
    }
}

/// Independent boolean attributes; `None` marks an unknown label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(
    from = "BTreeMap<Attribute, Option<bool>>",
    into = "BTreeMap<Attribute, Option<bool>>"
)]
pub struct AttributeLabels([Option<bool>; 3]);

impl AttributeLabels {
    pub fn new(labels: [Option<bool>; 3]) -> Self {
        AttributeLabels(labels)
    }

    pub fn get(&self, a: Attribute) -> Option<bool> {
        self.0[a.index()]
    }

    pub fn set(&mut self, a: Attribute, v: Option<bool>) {
        self.0[a.index()] = v;
    }
}

impl From<BTreeMap<Attribute, Option<bool>>> for AttributeLabels {
    fn from(m: BTreeMap<Attribute, Option<bool>>) -> Self {
        let mut out = AttributeLabels::default();
        for (a, v) in m {
            out.set(a, v);
        }
        out
    }
}

impl From<AttributeLabels> for BTreeMap<Attribute, Option<bool>> {
    fn from(l: AttributeLabels) -> Self {
        Attribute::ALL.iter().map(|&a| (a, l.get(a))).collect()
    }
}

/// The two classification benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Action,
    Attribute,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Action => "action",
            Task::Attribute => "attribute",
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            Task::Action => Action::ALL.iter().map(|a| a.name().to_string()).collect(),
            Task::Attribute => Attribute::ALL.iter().map(|a| a.name().to_string()).collect(),
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Task::Action => Action::ALL.len(),
            Task::Attribute => Attribute::ALL.len(),
        }
    }

    /// Per-class binary labels of an instance; `None` where the label is unknown.
    pub fn labels(self, inst: &InstanceRecord) -> Vec<Option<bool>> {
        match self {
            Task::Action => Action::ALL.iter().map(|&a| Some(inst.action == a)).collect(),
            Task::Attribute => Attribute::ALL.iter().map(|&a| inst.attributes.get(a)).collect(),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(Task::Action),
            "attribute" => Ok(Task::Attribute),
            other => Err(Error::ConfigInvalid(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<KeypointSet>,
    pub action: Action,
    pub attributes: AttributeLabels,
}

/// Identifies one person instance: `(image id, index within the image)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceRef {
    pub image: u32,
    pub instance: u32,
}

impl InstanceRef {
    pub fn new(image: u32, instance: u32) -> Self {
        InstanceRef { image, instance }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_point_set(part: PartType, a: (f64, f64), b: (f64, f64)) -> KeypointSet {
        let mut k = KeypointSet::default();
        let ls = part.landmarks();
        k.set(ls[0], Keypoint::visible(a.0, a.1));
        k.set(ls[1], Keypoint::visible(b.0, b.1));
        k
    }

    #[test]
    fn part_landmark_subsets() {
        assert_eq!(PartType::Head.landmarks().len(), 5);
        assert_eq!(PartType::Torso.landmarks().len(), 4);
        assert_eq!(PartType::Legs.landmarks().len(), 6);
        assert!(PartType::Torso.landmarks().contains(&Landmark::LeftShoulder));
        assert!(PartType::Head.landmarks().contains(&Landmark::RightShoulder));
        assert!(PartType::Legs.landmarks().contains(&Landmark::RightHip));
    }

    #[test]
    fn box_from_keypoints_examples() {
        let k = two_point_set(PartType::Torso, (10.0, 10.0), (20.0, 30.0));
        let tight = box_from_keypoints(&k, PartType::Torso, 0.0).unwrap();
        assert_eq!(tight.to_array(), [10.0, 10.0, 20.0, 30.0]);
        let padded = box_from_keypoints(&k, PartType::Torso, 0.1).unwrap();
        assert_eq!(padded.to_array(), [8.0, 8.0, 22.0, 32.0]);
        assert!(matches!(
            box_from_keypoints(&k, PartType::Legs, 0.1),
            Err(Error::InsufficientKeypoints("legs"))
        ));
    }

    #[test]
    fn part_box_is_clipped() {
        let k = two_point_set(PartType::Legs, (-10.0, 5.0), (20.0, 30.0));
        let b = part_box_in_image(&k, PartType::Legs, 0.0, 15.0, 100.0).unwrap();
        assert_eq!(b.to_array(), [0.0, 5.0, 15.0, 30.0]);
    }

    #[test]
    fn keypoint_json_shape() {
        let k = two_point_set(PartType::Head, (1.5, 2.0), (3.0, 4.0));
        let v = serde_json::to_value(k).unwrap();
        assert_eq!(v["left_eye"], serde_json::json!([1.5, 2.0, true]));
        assert_eq!(v["nose"][2], serde_json::json!(false));
        let back: KeypointSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn attributes_roundtrip_with_unknowns() {
        let labels = AttributeLabels::new([Some(true), None, Some(false)]);
        let s = serde_json::to_string(&labels).unwrap();
        assert_eq!(s, r#"{"has_hat":true,"long_hair":null,"long_pants":false}"#);
        assert_eq!(serde_json::from_str::<AttributeLabels>(&s).unwrap(), labels);
    }

    proptest! {
        #[test]
        fn box_from_keypoints_translation_equivariant(
            pts in proptest::collection::vec((0.0..100.0f64, 0.0..100.0f64), 6),
            dx in -50.0..50.0f64,
            dy in -50.0..50.0f64,
        ) {
            let mut k = KeypointSet::default();
            for (l, (x, y)) in PartType::Legs.landmarks().iter().zip(&pts) {
                k.set(*l, Keypoint::visible(*x, *y));
            }
            let b = box_from_keypoints(&k, PartType::Legs, 0.1).unwrap();
            let moved = box_from_keypoints(&k.translate(dx, dy), PartType::Legs, 0.1).unwrap();
            let expect = b.translate(dx, dy);
            for (u, v) in moved.to_array().iter().zip(expect.to_array()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
