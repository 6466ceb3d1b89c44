//! Detection matching, average precision, and the part and classification tables.

mod ap;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ap::{average_precision, match_detections, PRCurve};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::keypoints::{part_box_in_image, InstanceRecord, InstanceRef, PartType};
use crate::svm::PART_BOX_PAD;

pub const REPORT_VERSION: &str = "report-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub sigmas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sigmas: vec![0.2, 0.3, 0.4, 0.5],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::ConfigInvalid(format!(
                "IoU thresholds must lie in (0, 1]: {:?}",
                self.sigmas
            )));
        }
        Ok(())
    }
}

/// Ground truth of one evaluation image.
#[derive(Clone, Copy, Debug)]
pub struct EvalImage<'a> {
    pub id: u32,
    pub width: usize,
    pub height: usize,
    pub instances: &'a [InstanceRecord],
}

impl EvalImage<'_> {
    /// Padded, clipped part boxes of every annotated instance with enough landmarks.
    pub fn part_boxes(&self, t: PartType) -> Vec<BBox> {
        self.instances
            .iter()
            .filter_map(|inst| {
                let k = inst.keypoints.as_ref()?;
                part_box_in_image(k, t, PART_BOX_PAD, self.width as f64, self.height as f64).ok()
            })
            .collect()
    }
}

/// AP per part type (rows) and IoU threshold (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartsTable {
    pub sigmas: Vec<f64>,
    pub rows: Vec<(PartType, Vec<f64>)>,
}

impl PartsTable {
    pub fn ap(&self, t: PartType, sigma: f64) -> Option<f64> {
        let col = self.sigmas.iter().position(|s| (s - sigma).abs() < 1e-12)?;
        self.rows.iter().find(|r| r.0 == t).map(|r| r.1[col])
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<8}", "part");
        for sg in &self.sigmas {
            let _ = write!(s, " {:>8}", format!("s={sg}"));
        }
        s.push('\n');
        for (t, aps) in &self.rows {
            let _ = write!(s, "{:<8}", t.name());
            for ap in aps {
                let _ = write!(s, " {:>8.1}", 100.0 * ap);
            }
            s.push('\n');
        }
        s
    }
}

/// Pooled AP of one part type at one threshold. Matching runs per image on
/// that image's ranked detections, then hits are ranked globally.
pub fn part_curve(
    images: &[EvalImage],
    dets: &BTreeMap<u32, Vec<Detection>>,
    t: PartType,
    sigma: f64,
) -> Result<PRCurve> {
    let mut hits = Vec::new();
    let mut positives = 0;
    for img in images {
        let gts = img.part_boxes(t);
        positives += gts.len();
        let mut mine: Vec<&Detection> = dets
            .get(&img.id)
            .map(|v| v.iter().filter(|d| d.model.part_type() == Some(t)).collect())
            .unwrap_or_default();
        mine.sort_by(|a, b| a.rank_cmp(b));
        let boxes: Vec<BBox> = mine.iter().map(|d| d.bbox).collect();
        let flags = match_detections(&boxes, &gts, sigma);
        hits.extend(mine.iter().zip(flags).map(|(d, f)| (d.score, f)));
    }
    PRCurve::new(hits, positives)
}

pub fn evaluate_parts(images: &[EvalImage], dets: &[Detection], config: &EvalConfig) -> Result<PartsTable> {
    config.validate()?;
    let mut by_image: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        by_image.entry(d.image).or_default().push(*d);
    }
    let rows = PartType::ALL
        .par_iter()
        .map(|&t| {
            let aps = config
                .sigmas
                .iter()
                .map(|&s| part_curve(images, &by_image, t, s).map(|c| c.ap))
                .collect::<Result<Vec<f64>>>()?;
            Ok((t, aps))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartsTable {
        sigmas: config.sigmas.clone(),
        rows,
    })
}

/// Class scores and labels of one instance; `None` labels are unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredInstance {
    pub key: InstanceRef,
    pub scores: Vec<f64>,
    pub labels: Vec<Option<bool>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// AP per class; `None` for classes without positives.
    pub per_class: Vec<(String, Option<f64>)>,
    pub map: f64,
}

/// Rank instances per class by score (ties by instance key, so the input
/// order does not matter) and average the per-class APs.
pub fn evaluate_classification(items: &[ScoredInstance], classes: &[String]) -> Result<ClassificationResult> {
    for it in items {
        if it.scores.len() != classes.len() || it.labels.len() != classes.len() {
            return Err(Error::ShapeMismatch(format!(
                "instance {:?} has {} scores and {} labels for {} classes",
                it.key,
                it.scores.len(),
                it.labels.len(),
                classes.len()
            )));
        }
    }
    let per_class: Vec<(String, Option<f64>)> = classes
        .par_iter()
        .enumerate()
        .map(|(c, name)| {
            let mut ranked: Vec<(f64, InstanceRef, bool)> = items
                .iter()
                .filter_map(|it| it.labels[c].map(|l| (it.scores[c], it.key, l)))
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let positives = ranked.iter().filter(|r| r.2).count();
            let flags: Vec<bool> = ranked.iter().map(|r| r.2).collect();
            match average_precision(&flags, positives) {
                Ok(ap) => Ok((name.clone(), Some(ap))),
                Err(Error::NoPositives) => {
                    log::warn!("class {name} has no positive instances; skipped");
                    Ok((name.clone(), None))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let aps: Vec<f64> = per_class.iter().filter_map(|c| c.1).collect();
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    Ok(ClassificationResult { per_class, map })
}

/// Machine-readable result of one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub task: String,
    pub variant: String,
    pub mode: String,
    pub per_class: BTreeMap<String, f64>,
    pub map: f64,
}

impl Report {
    pub fn new(task: &str, variant: &str, mode: &str, result: &ClassificationResult) -> Self {
        Report {
            version: REPORT_VERSION.to_string(),
            task: task.to_string(),
            variant: variant.to_string(),
            mode: mode.to_string(),
            per_class: result
                .per_class
                .iter()
                .filter_map(|(n, ap)| ap.map(|a| (n.clone(), a)))
                .collect(),
            map: result.map,
        }
    }

    /// One report per IoU threshold of a parts table.
    pub fn from_parts(table: &PartsTable) -> Vec<Report> {
        table
            .sigmas
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let per_class: BTreeMap<String, f64> = table
                    .rows
                    .iter()
                    .map(|(t, aps)| (t.name().to_string(), aps[i]))
                    .collect();
                let map = per_class.values().sum::<f64>() / per_class.len().max(1) as f64;
                Report {
                    version: REPORT_VERSION.to_string(),
                    task: "parts".to_string(),
                    variant: format!("sigma={s}"),
                    mode: "oracle".to_string(),
                    per_class,
                    map,
                }
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = format!("{} / {} / {}\n", self.task, self.variant, self.mode);
        for (name, ap) in &self.per_class {
            let _ = writeln!(s, "  {:<14} {:>6.1}", name, 100.0 * ap);
        }
        let _ = writeln!(s, "  {:<14} {:>6.1}", "mAP", 100.0 * self.map);
        s
    }
}

pub fn save_reports(path: &Path, reports: &[Report]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_reports(path: &Path) -> Result<Vec<Report>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let r: Report = serde_json::from_str(l)?;
            if r.version != REPORT_VERSION {
                return Err(Error::VersionMismatch {
                    expected: REPORT_VERSION,
                    found: r.version,
                });
            }
            Ok(r)
        })
        .collect()
}
