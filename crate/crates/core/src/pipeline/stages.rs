use rayon::prelude::*;

use crate::detect::{detect_instances, detect_parts, DetectParams, Detection};
use crate::error::Result;
use crate::features::{build_pyramid, FeatureExtractorSpec, PyramidConfig};
use crate::keypoints::InstanceRecord;
use crate::partdesign::ClusterInventory;
use crate::raster::Raster;
use crate::svm::{train_part_model, train_root_model, trainable, DetectorTrainingConfig, LinearModel, TrainingSet};
use crate::synth::DatasetImage;

/// An image with its annotations, independent of where it was loaded from.
#[derive(Clone, Debug)]
pub struct Scene {
    pub id: u32,
    pub raster: Raster,
    pub instances: Vec<InstanceRecord>,
}

impl From<&DatasetImage> for Scene {
    fn from(d: &DatasetImage) -> Self {
        Scene {
            id: d.id,
            raster: d.image.raster.clone(),
            instances: d.image.instances.clone(),
        }
    }
}

pub fn training_set(scenes: &[Scene], spec: &FeatureExtractorSpec, pyr: &PyramidConfig) -> Result<TrainingSet> {
    TrainingSet::build(
        scenes
            .iter()
            .map(|s| (s.id, s.raster.clone(), s.instances.clone()))
            .collect(),
        spec,
        pyr,
    )
}

/// One detector per cluster with at least `min_positives` positives, in inventory order.
pub fn train_part_models(
    set: &TrainingSet,
    inventory: &ClusterInventory,
    cfg: &DetectorTrainingConfig,
    min_positives: usize,
    seed: u64,
) -> Result<Vec<LinearModel>> {
    let clusters: Vec<_> = trainable(&inventory.clusters, min_positives).collect();
    clusters
        .into_iter()
        .map(|c| {
            let (m, trace) = train_part_model(c, set, cfg, seed)?;
            log::info!(
                "trained {} on {} positives, cache {}",
                m.id(),
                trace.positives.len(),
                trace.cache.len()
            );
            Ok(m)
        })
        .collect()
}

pub fn train_root(set: &TrainingSet, cfg: &DetectorTrainingConfig, seed: u64) -> Result<LinearModel> {
    Ok(train_root_model(set, cfg, seed)?.0)
}

/// Part detections of every scene, in scene order.
pub fn detect_parts_batch(
    scenes: &[Scene],
    models: &[LinearModel],
    spec: &FeatureExtractorSpec,
    pyr: &PyramidConfig,
    params: &DetectParams,
) -> Result<Vec<Detection>> {
    let per: Vec<Vec<Detection>> = scenes
        .par_iter()
        .map(|s| {
            let p = build_pyramid(&s.raster, s.id, spec, pyr)?;
            Ok(detect_parts(&p, models, params)?.iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Root detections of every scene, in scene order.
pub fn detect_instances_batch(
    scenes: &[Scene],
    root: &LinearModel,
    spec: &FeatureExtractorSpec,
    pyr: &PyramidConfig,
    params: &DetectParams,
) -> Result<Vec<Detection>> {
    let per: Vec<Vec<Detection>> = scenes
        .par_iter()
        .map(|s| {
            let p = build_pyramid(&s.raster, s.id, spec, pyr)?;
            detect_instances(&p, root, params)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}
