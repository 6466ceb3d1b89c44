use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::classify::bank::{load_bank_file, predict_linear, save_bank_file, train_linear_bank};
use crate::error::{Error, Result};
use crate::keypoints::Task;
use crate::svm::{LinearModel, SolverConfig};

pub const RESCORER_VERSION: &str = "rescorer-v1";

/// Per-image auxiliary scores, `image id -> class -> score`.
pub type ObjectScores = BTreeMap<u32, BTreeMap<String, f64>>;

pub fn load_object_scores(path: &Path) -> Result<ObjectScores> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Sorted class names appearing anywhere in an object score table.
pub fn object_classes(scores: &ObjectScores) -> Vec<String> {
    let mut names: Vec<String> = scores.values().flat_map(|m| m.keys().cloned()).collect();
    names.sort();
    names.dedup();
    names
}

/// Object channel of one image in `classes` order; missing entries are zero.
pub fn object_vector(scores: Option<&ObjectScores>, image: u32, classes: &[String]) -> Vec<f64> {
    let row = scores.and_then(|s| s.get(&image));
    classes
        .iter()
        .map(|c| row.and_then(|r| r.get(c)).copied().unwrap_or(0.0))
        .collect()
}

/// Rescoring input for every class: `[own score, per-class max over the other
/// people (0 when alone), object scores]`.
pub fn context_features(own: &[f64], others: &[&[f64]], objects: &[f64]) -> Result<Vec<Vec<f32>>> {
    let k = own.len();
    if let Some(o) = others.iter().find(|o| o.len() != k) {
        return Err(Error::ShapeMismatch(format!(
            "other instance has {} scores, expected {k}",
            o.len()
        )));
    }
    let others_max: Vec<f64> = (0..k)
        .map(|c| {
            others
                .iter()
                .map(|o| o[c])
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
                .unwrap_or(0.0)
        })
        .collect();
    Ok(own
        .iter()
        .map(|s| {
            std::iter::once(*s)
                .chain(others_max.iter().copied())
                .chain(objects.iter().copied())
                .map(|v| v as f32)
                .collect()
        })
        .collect())
}

/// One rescoring SVM per class over [`context_features`].
#[derive(Clone, Debug, PartialEq)]
pub struct ContextRescorer {
    pub task: Task,
    pub classes: Vec<String>,
    pub object_classes: usize,
    pub models: Vec<LinearModel>,
}

impl ContextRescorer {
    /// `samples[i][c]` is the feature of instance `i` for class `c`.
    pub fn train(
        task: Task,
        samples: &[Vec<Vec<f32>>],
        labels: &[Vec<Option<bool>>],
        object_classes: usize,
        c: f64,
        solver: &SolverConfig,
    ) -> Result<Self> {
        let classes = task.class_names();
        let expected = 1 + classes.len() + object_classes;
        let mut models = Vec::with_capacity(classes.len());
        for (k, name) in classes.iter().enumerate() {
            let mut xs: Vec<&[f32]> = Vec::with_capacity(samples.len());
            for s in samples {
                let f = s
                    .get(k)
                    .ok_or_else(|| Error::ShapeMismatch(format!("no context feature for class {name}")))?;
                if f.len() != expected {
                    return Err(Error::ShapeMismatch(format!(
                        "context feature of length {}, expected {expected}",
                        f.len()
                    )));
                }
                xs.push(f);
            }
            let ys: Vec<Vec<Option<bool>>> = labels.iter().map(|l| vec![l[k]]).collect();
            models.extend(train_linear_bank(&xs, &ys, std::slice::from_ref(name), c, solver)?);
        }
        Ok(ContextRescorer {
            task,
            classes,
            object_classes,
            models,
        })
    }

    pub fn rescore(&self, features: &[Vec<f32>]) -> Result<Vec<f64>> {
        if features.len() != self.models.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} class features for {} rescoring models",
                features.len(),
                self.models.len()
            )));
        }
        features
            .iter()
            .zip(&self.models)
            .map(|(f, m)| {
                predict_linear(std::slice::from_ref(m), f).map(|v| v[0]).map_err(|_| {
                    Error::ShapeMismatch(format!("context feature of length {}, expected {}", f.len(), m.dim()))
                })
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_bank_file(path, self.task, None, &self.classes, self.object_classes, &self.models)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = load_bank_file(path, RESCORER_VERSION)?;
        Ok(ContextRescorer {
            task: f.task,
            classes: f.classes,
            object_classes: f.object_classes,
            models: f.models,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::ModelKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_person_uses_zero_sentinel() {
        let f = context_features(&[0.5, -1.0], &[], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            f,
            vec![vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]
        );
    }

    #[test]
    fn others_channel_is_the_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let own: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let others: Vec<Vec<f64>> = (0..rng.gen_range(1..4))
                .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let refs: Vec<&[f64]> = others.iter().map(|o| o.as_slice()).collect();
            let f = context_features(&own, &refs, &[]).unwrap();
            for c in 0..4 {
                let mut m = f64::NEG_INFINITY;
                for o in &others {
                    if o[c] > m {
                        m = o[c];
                    }
                }
                for row in &f {
                    assert_eq!(row[1 + c], m as f32);
                }
            }
        }
        assert!(matches!(
            context_features(&[0.0; 4], &[&[0.0; 3]], &[]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn identity_rescorer_returns_inputs() {
        let k = 4;
        let models: Vec<LinearModel> = (0..k)
            .map(|_| {
                let mut w = vec![0.0; 1 + k];
                w[0] = 1.0;
                LinearModel::new(ModelKind::Classifier, [1, 1, 1 + k], w, 0.0).unwrap()
            })
            .collect();
        let r = ContextRescorer {
            task: Task::Action,
            classes: Task::Action.class_names(),
            object_classes: 0,
            models,
        };
        let own = [0.25, -0.5, 1.5, 0.0];
        let f = context_features(&own, &[&[9.0, 9.0, 9.0, 9.0]], &[]).unwrap();
        assert_eq!(r.rescore(&f).unwrap(), own.to_vec());
        assert!(matches!(r.rescore(&f[..2]), Err(Error::ShapeMismatch(_))));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        r.save(&p).unwrap();
        assert_eq!(ContextRescorer::load(&p).unwrap(), r);
    }

    #[test]
    fn object_vector_fills_missing_with_zero() {
        let mut s = ObjectScores::new();
        s.entry(3).or_default().insert("chair".into(), 0.7);
        s.entry(4).or_default().insert("bike".into(), 0.1);
        let cls = object_classes(&s);
        assert_eq!(cls, vec!["bike".to_string(), "chair".to_string()]);
        assert_eq!(object_vector(Some(&s), 3, &cls), vec![0.0, 0.7]);
        assert_eq!(object_vector(None, 3, &cls), vec![0.0, 0.0]);
    }
}
