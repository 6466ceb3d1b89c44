use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::PartType;

pub const MODEL_VERSION: &str = "model-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Part,
    Root,
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub c_reg: f64,
    pub rounds: usize,
    pub objective: f64,
}

/// A linear scoring function `w . x + b`. Filters are stored row-major as
/// `(rows, cols, channels)`; classifiers use `(1, 1, D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub part_type: Option<PartType>,
    pub cluster_index: Option<usize>,
    /// Class name for classifiers.
    pub label: Option<String>,
    pub dims: [usize; 3],
    pub weights: Vec<f32>,
    pub bias: f64,
    pub meta: TrainMeta,
}

impl LinearModel {
    pub fn new(kind: ModelKind, dims: [usize; 3], weights: Vec<f32>, bias: f64) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: weights.len(),
            });
        }
        if !weights.iter().all(|w| w.is_finite()) || !bias.is_finite() {
            return Err(Error::Parse("non-finite model parameters".into()));
        }
        Ok(LinearModel {
            kind,
            part_type: None,
            cluster_index: None,
            label: None,
            dims,
            weights,
            bias,
            meta: TrainMeta {
                c_reg: 0.0,
                rounds: 0,
                objective: 0.0,
            },
        })
    }

    pub fn zeros(kind: ModelKind, dims: [usize; 3]) -> Self {
        Self::new(kind, dims, vec![0.0; dims[0] * dims[1] * dims[2]], 0.0).expect("consistent")
    }

    pub fn rows(&self) -> usize {
        self.dims[0]
    }
    pub fn cols(&self) -> usize {
        self.dims[1]
    }
    pub fn channels(&self) -> usize {
        self.dims[2]
    }
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f32]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .map(|(w, v)| *w as f64 * *v as f64)
            .sum::<f64>()
            + self.bias
    }

    /// Short identifier used in detection files, e.g. `head/3` or `root`.
    pub fn id(&self) -> String {
        match (self.kind, self.part_type, self.cluster_index) {
            (ModelKind::Part, Some(t), Some(j)) => format!("{t}/{j}"),
            (ModelKind::Root, ..) => "root".to_string(),
            (ModelKind::Classifier, ..) => format!("classifier/{}", self.label.as_deref().unwrap_or("?")),
            _ => "part".to_string(),
        }
    }

    fn to_file(&self) -> ModelFile {
        let mut bytes = Vec::with_capacity(self.weights.len() * 4);
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        ModelFile {
            version: MODEL_VERSION.to_string(),
            kind: self.kind,
            part_type: self.part_type,
            cluster_index: self.cluster_index,
            label: self.label.clone(),
            dims: self.dims,
            bias: self.bias,
            c_reg: self.meta.c_reg,
            rounds: self.meta.rounds,
            objective: self.meta.objective,
            weights: STANDARD.encode(bytes),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                expected: MODEL_VERSION,
                found: f.version,
            });
        }
        let bytes = STANDARD
            .decode(f.weights.as_bytes())
            .map_err(|e| Error::Parse(format!("model weights: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Parse(format!(
                "model weights: {} bytes is not a whole number of floats",
                bytes.len()
            )));
        }
        let weights: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut m = LinearModel::new(f.kind, f.dims, weights, f.bias).map_err(|e| match e {
            Error::DimensionMismatch { expected, found } => Error::Parse(format!(
                "model weights: {found} floats for dims {:?} ({expected} expected)",
                f.dims
            )),
            e => e,
        })?;
        m.part_type = f.part_type;
        m.cluster_index = f.cluster_index;
        m.label = f.label;
        m.meta = TrainMeta {
            c_reg: f.c_reg,
            rounds: f.rounds,
            objective: f.objective,
        };
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    part_type: Option<PartType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cluster_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    dims: [usize; 3],
    bias: f64,
    c_reg: f64,
    rounds: usize,
    objective: f64,
    weights: String,
}

/// Write models as JSON lines, one model per line.
pub fn save_models(path: &Path, models: &[LinearModel]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    for m in models {
        out.push_str(&m.to_json()?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_models(path: &Path) -> Result<Vec<LinearModel>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(LinearModel::from_json)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LinearModel {
        let w: Vec<f32> = (0..8 * 8 * 9).map(|i| ((i * 37) % 101) as f32 / 101.0 - 0.5).collect();
        let mut m = LinearModel::new(ModelKind::Part, [8, 8, 9], w, -0.123_456_789_012_345).unwrap();
        m.part_type = Some(PartType::Legs);
        m.cluster_index = Some(4);
        m.meta = TrainMeta {
            c_reg: 0.01,
            rounds: 3,
            objective: 12.5,
        };
        m
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let m = sample();
        let back = LinearModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.id(), "legs/4");
    }

    #[test]
    fn weights_are_little_endian_f32() {
        let m = LinearModel::new(ModelKind::Classifier, [1, 1, 2], vec![1.0, -2.0], 0.5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        let raw = STANDARD.decode(v["weights"].as_str().unwrap()).unwrap();
        assert_eq!(raw, [1.0f32.to_le_bytes(), (-2.0f32).to_le_bytes()].concat());
        assert_eq!(v["version"], MODEL_VERSION);
        assert_eq!(v["kind"], "classifier");
    }

    #[test]
    fn rejects_bad_files() {
        let m = sample();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["version"] = "model-v0".into();
        assert!(matches!(
            LinearModel::from_json(&v.to_string()),
            Err(Error::VersionMismatch { .. })
        ));
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        let w = v["weights"].as_str().unwrap().to_string();
        v["weights"] = STANDARD.encode(&STANDARD.decode(w).unwrap()[..102]).into();
        assert!(matches!(LinearModel::from_json(&v.to_string()), Err(Error::Parse(_))));
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        let w = v["weights"].as_str().unwrap().to_string();
        v["weights"] = STANDARD.encode(&STANDARD.decode(w).unwrap()[..400]).into();
        assert!(matches!(LinearModel::from_json(&v.to_string()), Err(Error::Parse(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m/parts.jsonl");
        let models = vec![sample(), LinearModel::zeros(ModelKind::Root, [10, 6, 9])];
        save_models(&p, &models).unwrap();
        assert_eq!(load_models(&p).unwrap(), models);
        assert!(matches!(
            load_models(&dir.path().join("x")),
            Err(Error::MissingArtifact(_))
        ));
    }
}
