use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::classify::{
    context_features, load_object_scores, load_predictions, object_classes, object_vector, save_predictions,
    train_classifiers, ClassifierBank, ContextRescorer, Mode, Prediction, Variant, PREDS_VERSION,
};
use crate::detect::{load_detections, save_detections, KnnIndex};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_classification, evaluate_parts, load_reports, save_reports, EvalImage, Report, ScoredInstance,
};
use crate::keypoints::{InstanceRecord, Task};
use crate::partdesign::{cluster_parts, ClusterInventory};
use crate::pipeline::benchmark::instance_labels;
use crate::pipeline::classifying::{build_knn_index, describe_scenes, DescribeContext, DescribedInstance, Precomputed};
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::stages::{
    detect_instances_batch, detect_parts_batch, train_part_models, train_root, training_set, Scene,
};
use crate::svm::{load_models, save_models, LinearModel, SolverConfig};
use crate::synth::{load_split, make_split, write_split, ImageRecord, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Gen,
    Cluster,
    TrainParts,
    TrainRoot,
    Detect,
    EvalParts,
    TrainClassifier,
    Classify,
    Rescore,
    EvalClassification,
    Report,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Gen,
        Command::Cluster,
        Command::TrainParts,
        Command::TrainRoot,
        Command::Detect,
        Command::EvalParts,
        Command::TrainClassifier,
        Command::Classify,
        Command::Rescore,
        Command::EvalClassification,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Cluster => "cluster",
            Command::TrainParts => "train-parts",
            Command::TrainRoot => "train-root",
            Command::Detect => "detect",
            Command::EvalParts => "eval-parts",
            Command::TrainClassifier => "train-classifier",
            Command::Classify => "classify",
            Command::Rescore => "rescore",
            Command::EvalClassification => "eval-classification",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown command {s:?}")))
    }
}

/// Where each artifact lives under the work directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub work: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Layout {
            work: cfg.work_dir.clone(),
        }
    }

    pub fn clusters(&self) -> PathBuf {
        self.work.join("clusters.json")
    }

    pub fn part_models(&self) -> PathBuf {
        self.work.join("models").join("parts.jsonl")
    }

    pub fn root_model(&self) -> PathBuf {
        self.work.join("models").join("root.jsonl")
    }

    pub fn detections(&self, split: Split) -> PathBuf {
        self.work.join("dets").join(format!("{}.jsonl", split.name()))
    }

    fn stem(task: Task, variant: Variant) -> String {
        format!("{}-{}", task.name(), variant.name())
    }

    pub fn bank(&self, task: Task, variant: Variant) -> PathBuf {
        self.work
            .join("banks")
            .join(format!("{}.json", Self::stem(task, variant)))
    }

    pub fn rescorer(&self, task: Task, variant: Variant) -> PathBuf {
        self.work
            .join("banks")
            .join(format!("{}-context.json", Self::stem(task, variant)))
    }

    pub fn predictions(&self, task: Task, variant: Variant, mode: Mode) -> PathBuf {
        self.work
            .join("preds")
            .join(format!("{}-{}.jsonl", Self::stem(task, variant), mode.name()))
    }

    pub fn rescored(&self, task: Task, variant: Variant, mode: Mode) -> PathBuf {
        self.work
            .join("preds")
            .join(format!("{}-{}-context.jsonl", Self::stem(task, variant), mode.name()))
    }

    pub fn parts_report(&self) -> PathBuf {
        self.work.join("reports").join("parts.jsonl")
    }

    pub fn classification_report(&self, task: Task, variant: Variant, mode: Mode) -> PathBuf {
        self.work
            .join("reports")
            .join(format!("{}-{}.jsonl", Self::stem(task, variant), mode.name()))
    }

    pub fn summary(&self) -> PathBuf {
        self.work.join("report.txt")
    }
}

/// Runs one subcommand. Returns the text printed on stdout.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<String> {
    let layout = Layout::new(cfg);
    match command {
        Command::Gen => gen(cfg),
        Command::Cluster => cluster(cfg, &layout),
        Command::TrainParts => train_parts(cfg, &layout),
        Command::TrainRoot => train_root_cmd(cfg, &layout),
        Command::Detect => detect(cfg, &layout),
        Command::EvalParts => eval_parts(cfg, &layout),
        Command::TrainClassifier => train_classifier(cfg, &layout),
        Command::Classify => classify(cfg, &layout),
        Command::Rescore => rescore(cfg, &layout),
        Command::EvalClassification => eval_classification(cfg, &layout),
        Command::Report => report(&layout),
    }
}

/// Every subcommand in pipeline order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<String> {
    let mut out = String::new();
    for c in Command::ALL {
        out.push_str(&run(c, cfg)?);
    }
    Ok(out)
}

fn scene_from_record(data: &crate::synth::SplitData, r: &ImageRecord) -> Result<Scene> {
    Ok(Scene {
        id: r.id,
        raster: data.load_raster(r)?,
        instances: r.instances.clone(),
    })
}

pub fn load_scenes(data_dir: &Path, split: Split) -> Result<Vec<Scene>> {
    let data = load_split(data_dir, split)?;
    data.images().par_iter().map(|r| scene_from_record(&data, r)).collect()
}

fn gen(cfg: &ExperimentConfig) -> Result<String> {
    let mut out = String::new();
    for split in Split::ALL {
        let images = make_split(&cfg.dataset, split)?;
        write_split(&cfg.data_dir, split, &images)?;
        let people: usize = images.iter().map(|i| i.image.instances.len()).sum();
        out.push_str(&format!(
            "{}: {} images, {} people\n",
            split.name(),
            images.len(),
            people
        ));
    }
    Ok(out)
}

fn train_records(cfg: &ExperimentConfig) -> Result<Vec<(u32, Vec<InstanceRecord>)>> {
    let data = load_split(&cfg.data_dir, Split::Train)?;
    Ok(data.images().iter().map(|r| (r.id, r.instances.clone())).collect())
}

fn cluster(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let records = train_records(cfg)?;
    let refs = records.iter().flat_map(|(id, insts)| {
        insts
            .iter()
            .enumerate()
            .map(move |(i, inst)| (crate::keypoints::InstanceRef::new(*id, i as u32), inst))
    });
    let inv = cluster_parts(refs, &cfg.clustering, cfg.seed)?;
    inv.save(&layout.clusters())?;
    let mut out = format!("{} clusters\n", inv.clusters.len());
    for t in crate::keypoints::PartType::ALL {
        out.push_str(&format!("  {:<6} {}\n", t.name(), inv.count(t)));
    }
    Ok(out)
}

fn train_parts(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let inv = ClusterInventory::load(&layout.clusters())?;
    let scenes = load_scenes(&cfg.data_dir, Split::Train)?;
    let set = training_set(&scenes, &cfg.features, &cfg.pyramid)?;
    let models = train_part_models(&set, &inv, &cfg.training, cfg.clustering.min_positives, cfg.seed)?;
    save_models(&layout.part_models(), &models)?;
    Ok(format!("{} part models\n", models.len()))
}

fn train_root_cmd(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let scenes = load_scenes(&cfg.data_dir, Split::Train)?;
    let set = training_set(&scenes, &cfg.features, &cfg.pyramid)?;
    let root = train_root(&set, &cfg.training, cfg.seed)?;
    save_models(&layout.root_model(), std::slice::from_ref(&root))?;
    Ok(format!("root model {}x{}\n", root.dims[0], root.dims[1]))
}

fn load_root(layout: &Layout) -> Result<LinearModel> {
    let path = layout.root_model();
    load_models(&path)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Parse(format!("{} holds no model", path.display())))
}

/// Part detections on every split; person detections on the test split when a
/// root model has been trained.
fn detect(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let models = load_models(&layout.part_models())?;
    let root = if layout.root_model().exists() {
        Some(load_root(layout)?)
    } else {
        None
    };
    let params = &cfg.detection.params;
    let mut out = String::new();
    for split in Split::ALL {
        let scenes = load_scenes(&cfg.data_dir, split)?;
        let mut dets = detect_parts_batch(&scenes, &models, &cfg.features, &cfg.pyramid, params)?;
        let parts = dets.len();
        if let (Some(r), Split::Test) = (&root, split) {
            dets.extend(detect_instances_batch(&scenes, r, &cfg.features, &cfg.pyramid, params)?);
        }
        save_detections(&layout.detections(split), &dets)?;
        out.push_str(&format!(
            "{}: {} part detections, {} person detections\n",
            split.name(),
            parts,
            dets.len() - parts
        ));
    }
    Ok(out)
}

fn eval_parts(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let dets = load_detections(&layout.detections(Split::Val))?;
    let data = load_split(&cfg.data_dir, Split::Val)?;
    let images: Vec<EvalImage> = data
        .images()
        .iter()
        .map(|r| EvalImage {
            id: r.id,
            width: r.width,
            height: r.height,
            instances: &r.instances,
        })
        .collect();
    let table = evaluate_parts(&images, &dets, &cfg.eval)?;
    save_reports(&layout.parts_report(), &Report::from_parts(&table))?;
    Ok(table.render())
}

/// Holds what [`DescribeContext`] borrows.
struct DescribeInputs {
    part_models: Vec<LinearModel>,
    knn: Option<KnnIndex>,
    precomputed: Precomputed,
}

impl DescribeInputs {
    fn load(cfg: &ExperimentConfig, layout: &Layout, split: Split, variant: Variant, mode: Mode) -> Result<Self> {
        let needs_dets = variant == Variant::Parts || mode == Mode::Detected;
        if mode == Mode::Detected && !layout.root_model().exists() {
            return Err(Error::MissingArtifact(layout.root_model()));
        }
        let precomputed = if needs_dets {
            Precomputed::from_detections(load_detections(&layout.detections(split))?)
        } else {
            Precomputed::default()
        };
        let knn = if variant == Variant::Parts && cfg.detection.knn_k > 0 {
            Some(build_knn_index(
                &load_scenes(&cfg.data_dir, Split::Train)?,
                &cfg.features,
            )?)
        } else {
            None
        };
        Ok(DescribeInputs {
            part_models: Vec::new(),
            knn,
            precomputed,
        })
    }

    fn context<'a>(&'a self, cfg: &'a ExperimentConfig) -> DescribeContext<'a> {
        DescribeContext {
            spec: &cfg.features,
            pyramid: &cfg.pyramid,
            detect: &cfg.detection.params,
            absence_threshold: cfg.detection.absence_threshold,
            association_iou: cfg.detection.association_iou,
            part_models: &self.part_models,
            root: None,
            knn: self.knn.as_ref().map(|k| (k, cfg.detection.knn_k)),
            precomputed: Some(&self.precomputed),
        }
    }
}

fn describe_split(
    cfg: &ExperimentConfig,
    layout: &Layout,
    split: Split,
    variant: Variant,
    mode: Mode,
) -> Result<(Vec<Scene>, Vec<DescribedInstance>)> {
    let inputs = DescribeInputs::load(cfg, layout, split, variant, mode)?;
    let scenes = load_scenes(&cfg.data_dir, split)?;
    let described = describe_scenes(&scenes, variant, mode, &inputs.context(cfg))?;
    Ok((scenes, described))
}

fn train_classifier(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let (task, variant) = (cfg.classifier.task, cfg.classifier.variant);
    let (scenes, described) = describe_split(cfg, layout, Split::Train, variant, Mode::Oracle)?;
    let feats: Vec<&[f32]> = described
        .iter()
        .map(|d| d.descriptor.as_ref().expect("oracle boxes").features(variant))
        .collect();
    let labels = instance_labels(&scenes, &described, task);
    let bank = train_classifiers(
        &feats,
        &labels,
        task,
        variant,
        cfg.classifier.c_reg,
        &SolverConfig::default(),
    )?;
    bank.save(&layout.bank(task, variant))?;
    Ok(format!(
        "{task:?} {variant} bank: {} classes over {} instances\n",
        bank.classes.len(),
        feats.len()
    ))
}

fn load_bank(cfg: &ExperimentConfig, layout: &Layout) -> Result<ClassifierBank> {
    let bank = ClassifierBank::load(&layout.bank(cfg.classifier.task, cfg.classifier.variant))?;
    if bank.task != cfg.classifier.task || bank.variant != cfg.classifier.variant {
        return Err(Error::ConfigInvalid(format!(
            "bank was trained for {:?} / {}",
            bank.task, bank.variant
        )));
    }
    Ok(bank)
}

fn predictions(bank: &ClassifierBank, described: &[DescribedInstance], mode: Mode) -> Result<Vec<Prediction>> {
    described
        .iter()
        .map(|d| {
            let scores = match &d.descriptor {
                Some(x) => {
                    let v = bank.predict(x.features(bank.variant))?;
                    Some(bank.classes.iter().cloned().zip(v).collect())
                }
                None => None,
            };
            Ok(Prediction {
                version: PREDS_VERSION.to_string(),
                image: d.key.image,
                instance: d.key.instance,
                task: bank.task,
                variant: bank.variant,
                mode,
                bbox: d.bbox,
                scores,
            })
        })
        .collect()
}

fn classify(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let bank = load_bank(cfg, layout)?;
    let mode = cfg.classifier.mode;
    let (_, described) = describe_split(cfg, layout, Split::Test, bank.variant, mode)?;
    let preds = predictions(&bank, &described, mode)?;
    let unmatched = preds.iter().filter(|p| p.scores.is_none()).count();
    save_predictions(&layout.predictions(bank.task, bank.variant, mode), &preds)?;
    Ok(format!(
        "{} predictions, {} without a matching detection\n",
        preds.len(),
        unmatched
    ))
}

/// Context features of every scored prediction, grouped by image. Unscored
/// predictions get `None` and take no part in the others' context.
fn context_inputs(
    preds: &[Prediction],
    classes: &[String],
    objects: Option<&crate::classify::ObjectScores>,
    object_names: &[String],
) -> Result<Vec<Option<Vec<Vec<f32>>>>> {
    let mut by_image: BTreeMap<u32, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        if p.scores.is_some() {
            by_image.entry(p.image).or_default().push((i, p.score_vec(classes)?));
        }
    }
    let mut out = vec![None; preds.len()];
    for (image, members) in &by_image {
        let obj = object_vector(objects, *image, object_names);
        for (i, own) in members {
            let others: Vec<&[f64]> = members
                .iter()
                .filter(|(j, _)| j != i)
                .map(|(_, s)| s.as_slice())
                .collect();
            out[*i] = Some(context_features(own, &others, &obj)?);
        }
    }
    Ok(out)
}

fn rescore(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let bank = load_bank(cfg, layout)?;
    let mode = cfg.classifier.mode;
    let test_path = layout.predictions(bank.task, bank.variant, mode);
    let test_preds = load_predictions(&test_path)?;
    let objects = cfg
        .classifier
        .object_scores
        .as_deref()
        .map(load_object_scores)
        .transpose()?;
    let object_names = objects.as_ref().map(object_classes).unwrap_or_default();

    let (scenes, described) = describe_split(cfg, layout, Split::Train, bank.variant, Mode::Oracle)?;
    let train_preds = predictions(&bank, &described, Mode::Oracle)?;
    let labels = instance_labels(&scenes, &described, bank.task);
    let train_feats = context_inputs(&train_preds, &bank.classes, objects.as_ref(), &object_names)?;
    let samples: Vec<Vec<Vec<f32>>> = train_feats.into_iter().map(|f| f.expect("oracle boxes")).collect();
    let rescorer = ContextRescorer::train(
        bank.task,
        &samples,
        &labels,
        object_names.len(),
        cfg.classifier.rescore_c,
        &SolverConfig::default(),
    )?;
    rescorer.save(&layout.rescorer(bank.task, bank.variant))?;

    let test_feats = context_inputs(&test_preds, &bank.classes, objects.as_ref(), &object_names)?;
    let rescored = test_preds
        .iter()
        .zip(test_feats)
        .map(|(p, f)| {
            let scores = match f {
                Some(f) => Some(bank.classes.iter().cloned().zip(rescorer.rescore(&f)?).collect()),
                None => None,
            };
            Ok(Prediction { scores, ..p.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    save_predictions(&layout.rescored(bank.task, bank.variant, mode), &rescored)?;
    Ok(format!(
        "rescored {} predictions with {} object channels\n",
        rescored.len(),
        object_names.len()
    ))
}

fn score_predictions(
    preds: &[Prediction],
    records: &BTreeMap<u32, &ImageRecord>,
    task: Task,
) -> Result<Vec<ScoredInstance>> {
    let classes = task.class_names();
    preds
        .iter()
        .map(|p| {
            let inst = records
                .get(&p.image)
                .and_then(|r| r.instances.get(p.instance as usize))
                .ok_or_else(|| Error::Parse(format!("prediction for unknown instance {:?}", p.key())))?;
            Ok(ScoredInstance {
                key: p.key(),
                scores: p.score_vec(&classes)?,
                labels: task.labels(inst),
            })
        })
        .collect()
}

fn eval_classification(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let (task, variant, mode) = (cfg.classifier.task, cfg.classifier.variant, cfg.classifier.mode);
    let data = load_split(&cfg.data_dir, Split::Test)?;
    let records: BTreeMap<u32, &ImageRecord> = data.images().iter().map(|r| (r.id, r)).collect();
    let classes = task.class_names();
    let mut reports = Vec::new();
    let base = load_predictions(&layout.predictions(task, variant, mode))?;
    let result = evaluate_classification(&score_predictions(&base, &records, task)?, &classes)?;
    reports.push(Report::new(task.name(), variant.name(), mode.name(), &result));
    let ctx_path = layout.rescored(task, variant, mode);
    if ctx_path.exists() {
        let preds = load_predictions(&ctx_path)?;
        let result = evaluate_classification(&score_predictions(&preds, &records, task)?, &classes)?;
        reports.push(Report::new(
            task.name(),
            &format!("{variant}+context"),
            mode.name(),
            &result,
        ));
    }
    save_reports(&layout.classification_report(task, variant, mode), &reports)?;
    Ok(reports.iter().map(Report::render).collect())
}

/// Every saved report, in file name order, rendered to text and written next to the work directory's artifacts.
fn report(layout: &Layout) -> Result<String> {
    let dir = layout.work.join("reports");
    if !dir.exists() {
        return Err(Error::MissingArtifact(dir));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    files.sort();
    let mut out = String::new();
    for f in files {
        for r in load_reports(&f)? {
            out.push_str(&r.render());
        }
    }
    fs::write(layout.summary(), &out)?;
    Ok(out)
}
