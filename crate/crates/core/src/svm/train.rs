use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_pyramid, FeatureExtractorSpec, FeaturePyramid, PyramidConfig};
use crate::keypoints::{part_box_in_image, InstanceRecord, InstanceRef};
use crate::partdesign::PartCluster;
use crate::raster::Raster;
use crate::seed;
use crate::svm::mining::{mine_hard_negatives, random_negatives, MiningConfig, MiningState, NegativeImage};
use crate::svm::model::{LinearModel, ModelKind, TrainMeta};
use crate::svm::solver::{train_svm, SolverConfig};

/// Padding applied to keypoint boxes of parts, as a fraction of their longer side.
pub const PART_BOX_PAD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorTrainingConfig {
    pub part_filter: [usize; 2],
    pub root_filter: [usize; 2],
    pub c_part: f64,
    pub c_root: f64,
    pub mining: MiningConfig,
    pub solver: SolverConfig,
}

impl Default for DetectorTrainingConfig {
    fn default() -> Self {
        DetectorTrainingConfig {
            part_filter: [8, 8],
            root_filter: [10, 6],
            c_part: 0.01,
            c_root: 0.01,
            mining: MiningConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// An annotated training image with its pyramid.
#[derive(Clone, Debug)]
pub struct TrainingImage {
    pub id: u32,
    pub width: usize,
    pub height: usize,
    pub instances: Vec<InstanceRecord>,
    pub pyramid: FeaturePyramid,
}

/// Pyramids of a training split: images with people supply positives,
/// person-free images supply negatives.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub images: Vec<TrainingImage>,
    pub negatives: Vec<NegativeImage>,
}

impl TrainingSet {
    /// Build pyramids in parallel for `(id, raster, instances)` triples.
    pub fn build(
        items: Vec<(u32, Raster, Vec<InstanceRecord>)>,
        spec: &FeatureExtractorSpec,
        pyr: &PyramidConfig,
    ) -> Result<Self> {
        let built: Vec<(u32, usize, usize, Vec<InstanceRecord>, FeaturePyramid)> = items
            .into_par_iter()
            .map(|(id, raster, inst)| {
                let p = build_pyramid(&raster, id, spec, pyr)?;
                Ok((id, raster.width(), raster.height(), inst, p))
            })
            .collect::<Result<_>>()?;
        let mut set = TrainingSet::default();
        for (id, width, height, instances, pyramid) in built {
            if instances.is_empty() {
                set.negatives.push(NegativeImage {
                    id,
                    num_instances: 0,
                    pyramid,
                });
            } else {
                set.images.push(TrainingImage {
                    id,
                    width,
                    height,
                    instances,
                    pyramid,
                });
            }
        }
        set.images.sort_by_key(|im| im.id);
        Ok(set)
    }

    pub fn image(&self, id: u32) -> Option<&TrainingImage> {
        self.images
            .binary_search_by_key(&id, |im| im.id)
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn instance(&self, r: InstanceRef) -> Option<(&TrainingImage, &InstanceRecord)> {
        let img = self.image(r.image)?;
        Some((img, img.instances.get(r.instance as usize)?))
    }

    pub fn instance_refs(&self) -> impl Iterator<Item = (InstanceRef, &InstanceRecord)> {
        self.images.iter().flat_map(|im| {
            im.instances
                .iter()
                .enumerate()
                .map(move |(i, inst)| (InstanceRef::new(im.id, i as u32), inst))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub model: LinearModel,
    /// Negatives added by the mining step that preceded this training step.
    pub mined: usize,
    pub cache_size: usize,
}

#[derive(Clone, Debug)]
pub struct TrainingTrace {
    pub rounds: Vec<RoundRecord>,
    pub positives: Vec<Vec<f32>>,
    pub cache: MiningState,
}

/// Train a filter from positive windows: one solve on random negatives, then
/// `rounds` alternations of mining and retraining.
pub fn train_detector(
    positives: Vec<Vec<f32>>,
    negatives: &[NegativeImage],
    kind: ModelKind,
    dims: [usize; 3],
    c: f64,
    mining: &MiningConfig,
    solver: &SolverConfig,
    seed: u64,
) -> Result<(LinearModel, TrainingTrace)> {
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    let mut state = MiningState::new(mining.cache_cap);
    state.extend(random_negatives(negatives, dims, mining.initial_per_image, seed)?);
    let pos: Vec<&[f32]> = positives.iter().map(|p| p.as_slice()).collect();
    let fit = |state: &MiningState, bias: f64| -> Result<LinearModel> {
        let sol = train_svm(&pos, &state.features(), c, bias, solver)?;
        let mut m = LinearModel::new(kind, dims, sol.weights.iter().map(|w| *w as f32).collect(), sol.bias)?;
        m.meta = TrainMeta {
            c_reg: c,
            rounds: state.rounds,
            objective: sol.objective,
        };
        Ok(m)
    };
    let mut model = fit(&state, 0.0)?;
    let mut rounds = vec![RoundRecord {
        model: model.clone(),
        mined: state.len(),
        cache_size: state.len(),
    }];
    for _ in 0..mining.rounds {
        let mined = mine_hard_negatives(&model, negatives, mining.per_image_cap, &mut state)?;
        state.enforce_cap(&model);
        model = fit(&state, model.bias)?;
        log::debug!(
            "round {}: mined {mined}, cache {}, objective {:.4}",
            state.rounds,
            state.len(),
            model.meta.objective
        );
        rounds.push(RoundRecord {
            model: model.clone(),
            mined,
            cache_size: state.len(),
        });
    }
    Ok((
        model,
        TrainingTrace {
            rounds,
            positives,
            cache: state,
        },
    ))
}

/// Feature window of a `fh x fw` filter snapped onto `b`.
fn positive_window(img: &TrainingImage, b: &crate::geometry::BBox, fh: usize, fw: usize) -> Option<Vec<f32>> {
    let p = img.pyramid.snap_box(b, fh, fw)?;
    img.pyramid.levels[p.level].window(p.row, p.col, fh, fw).ok()
}

pub fn part_positives(cluster: &PartCluster, set: &TrainingSet, fh: usize, fw: usize) -> Vec<Vec<f32>> {
    cluster
        .positives
        .iter()
        .filter_map(|r| {
            let (img, inst) = set.instance(*r)?;
            let k = inst.keypoints.as_ref()?;
            let b = part_box_in_image(k, cluster.part_type, PART_BOX_PAD, img.width as f64, img.height as f64).ok()?;
            positive_window(img, &b, fh, fw)
        })
        .collect()
}

pub fn train_part_model(
    cluster: &PartCluster,
    set: &TrainingSet,
    cfg: &DetectorTrainingConfig,
    seed: u64,
) -> Result<(LinearModel, TrainingTrace)> {
    let [fh, fw] = cfg.part_filter;
    let channels = channels_of(set)?;
    let positives = part_positives(cluster, set, fh, fw);
    let stream = seed::derive(seed ^ cluster.index as u64, cluster.part_type.name());
    let (mut model, trace) = train_detector(
        positives,
        &set.negatives,
        ModelKind::Part,
        [fh, fw, channels],
        cfg.c_part,
        &cfg.mining,
        &cfg.solver,
        stream,
    )?;
    model.part_type = Some(cluster.part_type);
    model.cluster_index = Some(cluster.index);
    Ok((model, trace))
}

pub fn root_positives(set: &TrainingSet, fh: usize, fw: usize) -> Vec<Vec<f32>> {
    set.images
        .iter()
        .flat_map(|img| {
            img.instances
                .iter()
                .filter_map(move |inst| positive_window(img, &inst.bbox, fh, fw))
        })
        .collect()
}

/// Whole-person filter trained on instance boxes with the same machinery as parts.
pub fn train_root_model(
    set: &TrainingSet,
    cfg: &DetectorTrainingConfig,
    seed: u64,
) -> Result<(LinearModel, TrainingTrace)> {
    let [fh, fw] = cfg.root_filter;
    let channels = channels_of(set)?;
    train_detector(
        root_positives(set, fh, fw),
        &set.negatives,
        ModelKind::Root,
        [fh, fw, channels],
        cfg.c_root,
        &cfg.mining,
        &cfg.solver,
        seed::derive(seed, "root"),
    )
}

fn channels_of(set: &TrainingSet) -> Result<usize> {
    set.images
        .first()
        .map(|i| i.pyramid.channels())
        .or_else(|| set.negatives.first().map(|n| n.pyramid.channels()))
        .ok_or(Error::EmptyInput)
}

/// Part type of every cluster that gets a detector, in inventory order.
pub fn trainable<'a>(clusters: &'a [PartCluster], min_positives: usize) -> impl Iterator<Item = &'a PartCluster> {
    clusters.iter().filter(move |c| c.positives.len() >= min_positives)
}
