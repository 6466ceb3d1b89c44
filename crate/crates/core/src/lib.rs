//! Part detectors learned from keypoint clusters, and part-based action and
//! attribute classification on synthetic scenes.

pub mod classify;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod keypoints;
pub mod partdesign;
pub mod pipeline;
pub mod raster;
pub mod seed;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{clip_box, iou, BBox};
pub use keypoints::{
    Action, Attribute, AttributeLabels, InstanceRecord, InstanceRef, Keypoint, KeypointSet, Landmark, PartType, Task,
};
pub use raster::Raster;
