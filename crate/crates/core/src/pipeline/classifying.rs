use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::classify::{assemble_descriptor, sub_boxes, InstanceDescriptor, Mode, Variant};
use crate::detect::{
    assign_parts, associate_detections, detect_instances, detect_parts, estimate_keypoints_knn, DetectParams,
    Detection, KnnIndex, PartDetections,
};
use crate::error::{Error, Result};
use crate::features::{build_pyramid, FeatureExtractorSpec, PyramidConfig};
use crate::geometry::BBox;
use crate::keypoints::InstanceRef;
use crate::pipeline::stages::Scene;
use crate::svm::LinearModel;

/// Everything needed to turn a scene into instance descriptors.
#[derive(Clone, Copy)]
pub struct DescribeContext<'a> {
    pub spec: &'a FeatureExtractorSpec,
    pub pyramid: &'a PyramidConfig,
    pub detect: &'a DetectParams,
    pub absence_threshold: f64,
    pub association_iou: f64,
    pub part_models: &'a [LinearModel],
    pub root: Option<&'a LinearModel>,
    /// Neighbour index and `k` for keypoint-guided part search.
    pub knn: Option<(&'a KnnIndex, usize)>,
    /// Detections loaded from disk; when set, no detector is run.
    pub precomputed: Option<&'a Precomputed>,
}

/// Part and person detections grouped by image id.
#[derive(Clone, Debug, Default)]
pub struct Precomputed {
    pub parts: BTreeMap<u32, Vec<Detection>>,
    pub roots: BTreeMap<u32, Vec<Detection>>,
}

impl Precomputed {
    /// Splits a mixed detection list by model kind; per-image order is kept.
    pub fn from_detections(dets: impl IntoIterator<Item = Detection>) -> Self {
        let mut out = Precomputed::default();
        for d in dets {
            let slot = if d.model.part_type().is_some() {
                &mut out.parts
            } else {
                &mut out.roots
            };
            slot.entry(d.image).or_default().push(d);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct DescribedInstance {
    pub key: InstanceRef,
    /// Box the descriptor was computed on; `None` if no detection matched.
    pub bbox: Option<BBox>,
    pub descriptor: Option<InstanceDescriptor>,
}

pub fn build_knn_index(scenes: &[Scene], spec: &FeatureExtractorSpec) -> Result<KnnIndex> {
    let entries: Vec<Vec<_>> = scenes
        .par_iter()
        .map(|s| {
            let mut idx = KnnIndex::default();
            for inst in &s.instances {
                if let Some(k) = &inst.keypoints {
                    idx.push(s.id, &s.raster, &inst.bbox, k, spec)?;
                }
            }
            Ok(idx.entries)
        })
        .collect::<Result<_>>()?;
    Ok(KnnIndex {
        entries: entries.into_iter().flatten().collect(),
    })
}

/// Descriptors of every annotated instance of one scene.
pub fn describe_scene(
    scene: &Scene,
    variant: Variant,
    mode: Mode,
    ctx: &DescribeContext,
) -> Result<Vec<DescribedInstance>> {
    let pre = ctx.precomputed;
    let needs_pyramid = pre.is_none() && (variant == Variant::Parts || mode == Mode::Detected);
    let pyr = if needs_pyramid {
        Some(build_pyramid(&scene.raster, scene.id, ctx.spec, ctx.pyramid)?)
    } else {
        None
    };
    let boxes: Vec<Option<BBox>> = match mode {
        Mode::Oracle => scene.instances.iter().map(|i| Some(i.bbox)).collect(),
        Mode::Detected => {
            let dets = match pre {
                Some(p) => p.roots.get(&scene.id).cloned().unwrap_or_default(),
                None => {
                    let root = ctx
                        .root
                        .ok_or_else(|| Error::ConfigInvalid("detected mode needs a root model".into()))?;
                    detect_instances(pyr.as_ref().expect("built"), root, ctx.detect)?
                }
            };
            let gts: Vec<BBox> = scene.instances.iter().map(|i| i.bbox).collect();
            associate_detections(&dets, &gts, ctx.association_iou)
                .into_iter()
                .map(|m| m.map(|i| dets[i].bbox))
                .collect()
        }
    };
    let parts = match (variant, pre) {
        (Variant::Parts, Some(p)) => {
            PartDetections::from_detections(p.parts.get(&scene.id).into_iter().flatten().copied())
        }
        (Variant::Parts, None) => detect_parts(pyr.as_ref().expect("built"), ctx.part_models, ctx.detect)?,
        _ => PartDetections::default(),
    };
    boxes
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let key = InstanceRef::new(scene.id, i as u32);
            let Some(b) = b else {
                return Ok(DescribedInstance {
                    key,
                    bbox: None,
                    descriptor: None,
                });
            };
            let sub = if variant == Variant::Parts {
                let regions = match ctx.knn {
                    Some((index, k)) => {
                        Some(estimate_keypoints_knn(&b, &scene.raster, Some(scene.id), index, k, ctx.spec)?.regions)
                    }
                    None => None,
                };
                let a = assign_parts(&b, &parts, ctx.absence_threshold, regions.as_ref());
                sub_boxes(variant, &b, Some(&a))?
            } else {
                sub_boxes(variant, &b, None)?
            };
            Ok(DescribedInstance {
                key,
                bbox: Some(b),
                descriptor: Some(assemble_descriptor(&scene.raster, &b, &sub, ctx.spec)?),
            })
        })
        .collect()
}

/// [`describe_scene`] over many scenes in parallel, flattened in scene order.
pub fn describe_scenes(
    scenes: &[Scene],
    variant: Variant,
    mode: Mode,
    ctx: &DescribeContext,
) -> Result<Vec<DescribedInstance>> {
    let per: Vec<Vec<DescribedInstance>> = scenes
        .par_iter()
        .map(|s| describe_scene(s, variant, mode, ctx))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}
