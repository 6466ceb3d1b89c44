use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::descriptor::Variant;
use crate::error::{Error, Result};
use crate::keypoints::Task;
use crate::svm::{train_svm, LinearModel, ModelKind, SolverConfig, TrainMeta};

pub const BANK_VERSION: &str = "bank-v1";

/// One linear classifier per class, all over the same input dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierBank {
    pub task: Task,
    pub variant: Variant,
    pub classes: Vec<String>,
    pub models: Vec<LinearModel>,
}

/// Fit one binary SVM per class column of `labels`; `None` labels are left out
/// of that class's problem.
pub fn train_linear_bank(
    features: &[&[f32]],
    labels: &[Vec<Option<bool>>],
    classes: &[String],
    c: f64,
    solver: &SolverConfig,
) -> Result<Vec<LinearModel>> {
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature vectors for {} label rows",
            features.len(),
            labels.len()
        )));
    }
    let dim = features.first().map_or(0, |f| f.len());
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    classes
        .par_iter()
        .enumerate()
        .map(|(k, name)| {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for (f, l) in features.iter().zip(labels) {
                match l.get(k).copied().flatten() {
                    Some(true) => pos.push(*f),
                    Some(false) => neg.push(*f),
                    None => {}
                }
            }
            if pos.is_empty() || neg.is_empty() {
                return Err(Error::EmptyClass(name.clone()));
            }
            let sol = train_svm(&pos, &neg, c, 0.0, solver)?;
            let mut m = LinearModel::new(
                ModelKind::Classifier,
                [1, 1, dim],
                sol.weights.iter().map(|w| *w as f32).collect(),
                sol.bias,
            )?;
            m.label = Some(name.clone());
            m.meta = TrainMeta {
                c_reg: c,
                rounds: 0,
                objective: sol.objective,
            };
            Ok(m)
        })
        .collect()
}

pub fn train_classifiers(
    features: &[&[f32]],
    labels: &[Vec<Option<bool>>],
    task: Task,
    variant: Variant,
    c: f64,
    solver: &SolverConfig,
) -> Result<ClassifierBank> {
    let classes = task.class_names();
    let models = train_linear_bank(features, labels, &classes, c, solver)?;
    Ok(ClassifierBank {
        task,
        variant,
        classes,
        models,
    })
}

/// Raw margins of every model in the bank.
pub fn predict_linear(models: &[LinearModel], x: &[f32]) -> Result<Vec<f64>> {
    models
        .iter()
        .map(|m| {
            if m.dim() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.dim(),
                    found: x.len(),
                });
            }
            Ok(m.score(x))
        })
        .collect()
}

impl ClassifierBank {
    pub fn input_dim(&self) -> usize {
        self.models.first().map_or(0, |m| m.dim())
    }

    pub fn predict(&self, x: &[f32]) -> Result<Vec<f64>> {
        predict_linear(&self.models, x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_bank_file(path, self.task, Some(self.variant), &self.classes, 0, &self.models)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = load_bank_file(path, BANK_VERSION)?;
        let variant = f
            .variant
            .ok_or_else(|| Error::Parse("classifier bank without variant".into()))?;
        Ok(ClassifierBank {
            task: f.task,
            variant,
            classes: f.classes,
            models: f.models,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    version: String,
    task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variant: Option<Variant>,
    classes: Vec<String>,
    #[serde(default)]
    object_classes: usize,
    models: Vec<serde_json::Value>,
}

pub(crate) struct LoadedBank {
    pub task: Task,
    pub variant: Option<Variant>,
    pub classes: Vec<String>,
    pub object_classes: usize,
    pub models: Vec<LinearModel>,
}

pub(crate) fn save_bank_file(
    path: &Path,
    task: Task,
    variant: Option<Variant>,
    classes: &[String],
    object_classes: usize,
    models: &[LinearModel],
) -> Result<()> {
    let version = if variant.is_some() {
        BANK_VERSION
    } else {
        crate::classify::context::RESCORER_VERSION
    };
    let file = BankFile {
        version: version.to_string(),
        task,
        variant,
        classes: classes.to_vec(),
        object_classes,
        models: models
            .iter()
            .map(|m| Ok(serde_json::from_str(&m.to_json()?)?))
            .collect::<Result<_>>()?,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub(crate) fn load_bank_file(path: &Path, version: &'static str) -> Result<LoadedBank> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let f: BankFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if f.version != version {
        return Err(Error::VersionMismatch {
            expected: version,
            found: f.version,
        });
    }
    let models = f
        .models
        .iter()
        .map(|v| LinearModel::from_json(&v.to_string()))
        .collect::<Result<Vec<_>>>()?;
    if models.len() != f.classes.len() {
        return Err(Error::Parse(format!(
            "{} models for {} classes",
            models.len(),
            f.classes.len()
        )));
    }
    Ok(LoadedBank {
        task: f.task,
        variant: f.variant,
        classes: f.classes,
        object_classes: f.object_classes,
        models,
    })
}
