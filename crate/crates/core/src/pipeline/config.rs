use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{Mode, Variant};
use crate::detect::DetectParams;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::features::{FeatureExtractorSpec, PyramidConfig};
use crate::keypoints::Task;
use crate::partdesign::ClusterConfig;
use crate::svm::DetectorTrainingConfig;
use crate::synth::DatasetConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    #[serde(flatten)]
    pub params: DetectParams,
    /// Parts scoring below this are treated as absent.
    pub absence_threshold: f64,
    /// Minimum IoU for a person detection to stand in for a ground-truth box.
    pub association_iou: f64,
    /// Neighbours used to place part search regions; 0 searches the whole box.
    pub knn_k: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            params: DetectParams::default(),
            absence_threshold: -0.1,
            association_iou: 0.5,
            knn_k: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub task: Task,
    pub variant: Variant,
    pub mode: Mode,
    pub c_reg: f64,
    pub rescore_c: f64,
    /// Optional per-image object scores for context rescoring.
    pub object_scores: Option<PathBuf>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            task: Task::Action,
            variant: Variant::Parts,
            mode: Mode::Oracle,
            c_reg: 1.0,
            rescore_c: 1.0,
            object_scores: None,
        }
    }
}

/// One JSON file describing a whole experiment. `seed` drives every random
/// stream, including dataset generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Generated images; relative paths resolve against the config file.
    pub data_dir: PathBuf,
    /// Models, detections, predictions and reports.
    pub work_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub features: FeatureExtractorSpec,
    pub pyramid: PyramidConfig,
    pub clustering: ClusterConfig,
    pub training: DetectorTrainingConfig,
    pub detection: DetectionConfig,
    pub eval: EvalConfig,
    pub classifier: ClassifierConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            data_dir: PathBuf::from("data"),
            work_dir: PathBuf::from("work"),
            dataset: DatasetConfig::default(),
            features: FeatureExtractorSpec::default(),
            pyramid: PyramidConfig::default(),
            clustering: ClusterConfig::default(),
            training: DetectorTrainingConfig::default(),
            detection: DetectionConfig::default(),
            eval: EvalConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Parse `v` as JSON if possible, otherwise keep it as a string.
fn override_value(v: &str) -> serde_json::Value {
    serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()))
}

/// Apply a `dotted.key=value` override to a JSON object.
pub fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::ConfigInvalid(format!("override {assignment:?} is not key=value")))?;
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::ConfigInvalid(format!("{key}: {p} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), override_value(value));
            return Ok(());
        }
        node = obj.entry(p.to_string()).or_insert_with(|| serde_json::json!({}));
    }
    Err(Error::ConfigInvalid(format!("empty override key in {assignment:?}")))
}

impl ExperimentConfig {
    /// Read a config, apply overrides, resolve relative paths against the
    /// file's directory, and validate.
    pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, overrides, seed, &base)
    }

    pub fn from_json(text: &str, overrides: &[String], seed: Option<u64>, base: &Path) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(format!("config: {e}")))?;
        // Start from the full defaults so overrides can reach nested fields that the file omits.
        let mut full = serde_json::to_value(ExperimentConfig::default())?;
        merge(&mut full, std::mem::take(&mut value));
        for o in overrides {
            apply_override(&mut full, o)?;
        }
        if let Some(s) = seed {
            full["seed"] = s.into();
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(full).map_err(|e| Error::ConfigInvalid(format!("config: {e}")))?;
        cfg.dataset.seed = cfg.seed;
        for p in [&mut cfg.data_dir, &mut cfg.work_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = cfg.classifier.object_scores.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        self.dataset.validate()?;
        self.features.validate()?;
        self.eval.validate()?;
        let r = self.pyramid.ratio;
        if !(r > 0.0 && r < 1.0) {
            return bad(format!("pyramid.ratio {r} must lie in (0, 1)"));
        }
        if !(self.clustering.eps > 0.0) {
            return bad(format!("clustering.eps {} must be positive", self.clustering.eps));
        }
        if self.clustering.max_positives == 0 {
            return bad("clustering.max_positives must be positive".into());
        }
        for (name, c) in [
            ("training.c_part", self.training.c_part),
            ("training.c_root", self.training.c_root),
            ("classifier.c_reg", self.classifier.c_reg),
            ("classifier.rescore_c", self.classifier.rescore_c),
        ] {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("{name} {c} must be positive"));
            }
        }
        if self.training.part_filter.contains(&0) || self.training.root_filter.contains(&0) {
            return bad("filter sizes must be positive".into());
        }
        let d = &self.detection;
        if !(d.params.nms_iou > 0.0 && d.params.nms_iou <= 1.0) {
            return bad(format!("detection.nms_iou {} must lie in (0, 1]", d.params.nms_iou));
        }
        if !(d.association_iou >= 0.0 && d.association_iou < 1.0) {
            return bad(format!(
                "detection.association_iou {} must lie in [0, 1)",
                d.association_iou
            ));
        }
        if d.params.top_k == 0 {
            return bad("detection.top_k must be positive".into());
        }
        Ok(())
    }

    pub fn models_dir(&self) -> PathBuf {
        self.work_dir.join("models")
    }
}

/// Recursively overlay `patch` onto `base`.
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
