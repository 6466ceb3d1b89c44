use std::time::Instant;

use crate::classify::{train_classifiers, Mode, Variant};
use crate::detect::KnnIndex;
use crate::error::Result;
use crate::eval::{evaluate_classification, evaluate_parts, EvalImage, PartsTable, Report, ScoredInstance};
use crate::geometry::iou;
use crate::keypoints::Task;
use crate::partdesign::cluster_parts;
use crate::pipeline::classifying::{build_knn_index, describe_scenes, DescribeContext, DescribedInstance};
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::stages::{
    detect_instances_batch, detect_parts_batch, train_part_models, train_root, training_set, Scene,
};
use crate::svm::{LinearModel, SolverConfig};
use crate::synth::make_dataset;

/// In-memory run of the whole method on a freshly generated dataset.
#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    /// Part AP on the validation split.
    pub parts: PartsTable,
    /// Classification results on the test split, one per (task, variant, mode).
    pub reports: Vec<Report>,
    /// Fraction of single-person validation images whose best root detection overlaps the person by at least 0.5.
    pub root_hit_rate: Option<f64>,
    pub part_models: Vec<LinearModel>,
    pub seconds: f64,
}

impl BenchmarkOutcome {
    pub fn map(&self, task: Task, variant: Variant, mode: Mode) -> Option<f64> {
        self.reports
            .iter()
            .find(|r| r.task == task.name() && r.variant == variant.name() && r.mode == mode.name())
            .map(|r| r.map)
    }
}

pub fn eval_images(scenes: &[Scene]) -> Vec<EvalImage<'_>> {
    scenes
        .iter()
        .map(|s| EvalImage {
            id: s.id,
            width: s.raster.width(),
            height: s.raster.height(),
            instances: &s.instances,
        })
        .collect()
}

/// Labels of every described instance, in the same order.
pub fn instance_labels(scenes: &[Scene], described: &[DescribedInstance], task: Task) -> Vec<Vec<Option<bool>>> {
    described
        .iter()
        .map(|d| {
            let s = scenes.binary_search_by_key(&d.key.image, |s| s.id).map(|i| &scenes[i]);
            let inst = &s.expect("described scene").instances[d.key.instance as usize];
            task.labels(inst)
        })
        .collect()
}

pub fn run_benchmark(
    cfg: &ExperimentConfig,
    tasks: &[Task],
    variants: &[Variant],
    modes: &[Mode],
) -> Result<BenchmarkOutcome> {
    let start = Instant::now();
    let data = make_dataset(&cfg.dataset)?;
    let train: Vec<Scene> = data.train.iter().map(Scene::from).collect();
    let val: Vec<Scene> = data.val.iter().map(Scene::from).collect();
    let test: Vec<Scene> = data.test.iter().map(Scene::from).collect();
    drop(data);

    let set = training_set(&train, &cfg.features, &cfg.pyramid)?;
    let inventory = cluster_parts(set.instance_refs(), &cfg.clustering, cfg.seed)?;
    let part_models = train_part_models(&set, &inventory, &cfg.training, cfg.clustering.min_positives, cfg.seed)?;
    let root = if modes.contains(&Mode::Detected) {
        Some(train_root(&set, &cfg.training, cfg.seed)?)
    } else {
        None
    };
    drop(set);
    log::info!("detectors trained after {:.1}s", start.elapsed().as_secs_f64());

    let val_dets = detect_parts_batch(&val, &part_models, &cfg.features, &cfg.pyramid, &cfg.detection.params)?;
    let parts = evaluate_parts(&eval_images(&val), &val_dets, &cfg.eval)?;

    let root_hit_rate = match &root {
        Some(r) => {
            let singles: Vec<Scene> = val.iter().filter(|s| s.instances.len() == 1).cloned().collect();
            let dets = detect_instances_batch(&singles, r, &cfg.features, &cfg.pyramid, &cfg.detection.params)?;
            let hits = singles
                .iter()
                .filter(|s| {
                    dets.iter()
                        .find(|d| d.image == s.id)
                        .is_some_and(|d| iou(&d.bbox, &s.instances[0].bbox) >= 0.5)
                })
                .count();
            Some(hits as f64 / singles.len().max(1) as f64)
        }
        None => None,
    };

    let knn: Option<KnnIndex> = if cfg.detection.knn_k > 0 && variants.contains(&Variant::Parts) {
        Some(build_knn_index(&train, &cfg.features)?)
    } else {
        None
    };
    let ctx = DescribeContext {
        spec: &cfg.features,
        pyramid: &cfg.pyramid,
        detect: &cfg.detection.params,
        absence_threshold: cfg.detection.absence_threshold,
        association_iou: cfg.detection.association_iou,
        part_models: &part_models,
        root: root.as_ref(),
        knn: knn.as_ref().map(|k| (k, cfg.detection.knn_k)),
        precomputed: None,
    };
    let solver = SolverConfig::default();
    let mut reports = Vec::new();
    for &variant in variants {
        let train_desc = describe_scenes(&train, variant, Mode::Oracle, &ctx)?;
        let feats: Vec<&[f32]> = train_desc
            .iter()
            .map(|d| d.descriptor.as_ref().expect("oracle boxes").features(variant))
            .collect();
        let banks = tasks
            .iter()
            .map(|&task| {
                let labels = instance_labels(&train, &train_desc, task);
                train_classifiers(&feats, &labels, task, variant, cfg.classifier.c_reg, &solver)
            })
            .collect::<Result<Vec<_>>>()?;
        for &mode in modes {
            let test_desc = describe_scenes(&test, variant, mode, &ctx)?;
            for bank in &banks {
                let labels = instance_labels(&test, &test_desc, bank.task);
                let items = test_desc
                    .iter()
                    .zip(labels)
                    .map(|(d, labels)| {
                        let scores = match &d.descriptor {
                            Some(x) => bank.predict(x.features(variant))?,
                            None => vec![f64::NEG_INFINITY; bank.classes.len()],
                        };
                        Ok(ScoredInstance {
                            key: d.key,
                            scores,
                            labels,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let result = evaluate_classification(&items, &bank.classes)?;
                reports.push(Report::new(bank.task.name(), variant.name(), mode.name(), &result));
            }
        }
        log::info!("variant {variant} done after {:.1}s", start.elapsed().as_secs_f64());
    }
    Ok(BenchmarkOutcome {
        parts,
        reports,
        root_hit_rate,
        part_models,
        seconds: start.elapsed().as_secs_f64(),
    })
}
