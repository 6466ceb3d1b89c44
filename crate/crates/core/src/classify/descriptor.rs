use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detect::PartAssignment;
use crate::error::{Error, Result};
use crate::features::{region_descriptor, FeatureExtractorSpec};
use crate::geometry::BBox;
use crate::keypoints::PartType;
use crate::raster::Raster;

/// Which blocks feed the classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Instance box only.
    #[serde(rename = "no-parts")]
    NoParts,
    /// Instance box plus top, middle and bottom thirds.
    #[serde(rename = "3-way")]
    ThreeWay,
    /// Instance box plus assigned head, torso and legs detections.
    #[serde(rename = "parts")]
    Parts,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::NoParts, Variant::ThreeWay, Variant::Parts];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoParts => "no-parts",
            Variant::ThreeWay => "3-way",
            Variant::Parts => "parts",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown variant {s:?}")))
    }
}

/// Where person boxes come from at test time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Oracle,
    Detected,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Oracle => "oracle",
            Mode::Detected => "detected",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "detected" => Ok(Mode::Detected),
            _ => Err(Error::ConfigInvalid(format!("unknown mode {s:?}"))),
        }
    }
}

/// Top, middle and bottom strips of equal height; the bottom one takes the remainder.
pub fn three_way_split(b: &BBox) -> Result<[BBox; 3]> {
    if b.height() < 3.0 {
        return Err(Error::BoxTooSmall(b.height()));
    }
    let h = (b.height() / 3.0).floor();
    let (y0, y1, y2) = (b.y1(), b.y1() + h, b.y1() + 2.0 * h);
    Ok([
        BBox::new(b.x1(), y0, b.x2(), y1)?,
        BBox::new(b.x1(), y1, b.x2(), y2)?,
        BBox::new(b.x1(), y2, b.x2(), b.y2())?,
    ])
}

/// Region boxes of the three sub-blocks for a variant.
pub fn sub_boxes(variant: Variant, b: &BBox, assignment: Option<&PartAssignment>) -> Result<[Option<BBox>; 3]> {
    Ok(match variant {
        Variant::NoParts => [None; 3],
        Variant::ThreeWay => three_way_split(b)?.map(Some),
        Variant::Parts => {
            let a = assignment.copied().unwrap_or_default();
            PartType::ALL.map(|t| a.get(t).map(|p| p.detection.bbox))
        }
    })
}

/// Concatenation of four `D`-length blocks: instance, then three sub-regions.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceDescriptor {
    pub data: Vec<f32>,
    pub present: [bool; 4],
    pub block_len: usize,
}

impl InstanceDescriptor {
    pub fn block(&self, i: usize) -> &[f32] {
        &self.data[i * self.block_len..(i + 1) * self.block_len]
    }

    /// The classifier input: the instance block for no-parts, all blocks otherwise.
    pub fn features(&self, variant: Variant) -> &[f32] {
        match variant {
            Variant::NoParts => self.block(0),
            _ => &self.data,
        }
    }
}

pub fn assemble_descriptor(
    image: &Raster,
    b: &BBox,
    parts: &[Option<BBox>; 3],
    spec: &FeatureExtractorSpec,
) -> Result<InstanceDescriptor> {
    let d = spec.descriptor_len();
    let mut data = vec![0.0f32; 4 * d];
    let mut present = [false; 4];
    data[..d].copy_from_slice(&region_descriptor(image, b, spec)?);
    present[0] = true;
    for (i, pb) in parts.iter().enumerate() {
        if let Some(pb) = pb {
            data[(i + 1) * d..(i + 2) * d].copy_from_slice(&region_descriptor(image, pb, spec)?);
            present[i + 1] = true;
        }
    }
    Ok(InstanceDescriptor {
        data,
        present,
        block_len: d,
    })
}
