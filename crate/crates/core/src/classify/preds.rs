use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::descriptor::{Mode, Variant};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::keypoints::{InstanceRef, Task};

pub const PREDS_VERSION: &str = "preds-v1";

/// Class scores of one annotated instance. In detected mode `scores` is
/// `None` when no person detection matched the instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub version: String,
    pub image: u32,
    pub instance: u32,
    pub task: Task,
    pub variant: Variant,
    pub mode: Mode,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    pub scores: Option<BTreeMap<String, f64>>,
}

impl Prediction {
    pub fn key(&self) -> InstanceRef {
        InstanceRef::new(self.image, self.instance)
    }

    /// Scores in `classes` order; unmatched instances rank below everything.
    pub fn score_vec(&self, classes: &[String]) -> Result<Vec<f64>> {
        match &self.scores {
            None => Ok(vec![f64::NEG_INFINITY; classes.len()]),
            Some(m) => classes
                .iter()
                .map(|c| {
                    m.get(c)
                        .copied()
                        .ok_or_else(|| Error::Parse(format!("prediction for {:?} lacks class {c}", self.key())))
                })
                .collect(),
        }
    }
}

pub fn save_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l)?;
            let version = v.get("version").and_then(|x| x.as_str()).unwrap_or("");
            if version != PREDS_VERSION {
                return Err(Error::VersionMismatch {
                    expected: PREDS_VERSION,
                    found: version.to_string(),
                });
            }
            Ok(serde_json::from_value(v)?)
        })
        .collect()
}
