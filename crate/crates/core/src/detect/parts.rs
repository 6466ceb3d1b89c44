use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detect::score::score_map;
use crate::error::{Error, Result};
use crate::features::{FeaturePyramid, Placement};
use crate::geometry::{iou, BBox};
use crate::keypoints::PartType;
use crate::svm::{LinearModel, ModelKind};

pub const DETS_VERSION: &str = "dets-v1";

/// Which filter produced a detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelId {
    Part { part_type: PartType, cluster: usize },
    Root,
}

impl ModelId {
    pub fn of(model: &LinearModel) -> Result<ModelId> {
        match (model.kind, model.part_type, model.cluster_index) {
            (ModelKind::Part, Some(part_type), Some(cluster)) => Ok(ModelId::Part { part_type, cluster }),
            (ModelKind::Root, ..) => Ok(ModelId::Root),
            _ => Err(Error::ConfigInvalid(format!(
                "model {} cannot be used for detection",
                model.id()
            ))),
        }
    }

    pub fn part_type(self) -> Option<PartType> {
        match self {
            ModelId::Part { part_type, .. } => Some(part_type),
            ModelId::Root => None,
        }
    }

    pub fn cluster(self) -> usize {
        match self {
            ModelId::Part { cluster, .. } => cluster,
            ModelId::Root => 0,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::Part { part_type, cluster } => write!(f, "{part_type}/{cluster}"),
            ModelId::Root => f.write_str("root"),
        }
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "root" {
            return Ok(ModelId::Root);
        }
        let bad = || Error::Parse(format!("bad model id {s:?}"));
        let (t, j) = s.split_once('/').ok_or_else(bad)?;
        let part_type = PartType::ALL.into_iter().find(|p| p.name() == t).ok_or_else(bad)?;
        let cluster = j.parse().map_err(|_| bad())?;
        Ok(ModelId::Part { part_type, cluster })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub image: u32,
    pub model: ModelId,
    pub bbox: BBox,
    /// Raw filter response `w . x + b`.
    pub score: f64,
    pub placement: Placement,
}

impl Detection {
    /// Ranking order: score descending, then lower cluster index, then box, then placement.
    pub fn rank_cmp(&self, other: &Detection) -> std::cmp::Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.model.cluster().cmp(&other.model.cluster()))
            .then(self.bbox.lex_cmp(&other.bbox))
            .then(self.placement.cmp(&other.placement))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    pub nms_iou: f64,
    /// Detections kept per part type (or per image for roots) after NMS.
    pub top_k: usize,
    /// Placements scoring at or below this margin are not emitted.
    pub emit_threshold: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            nms_iou: 0.3,
            top_k: 20,
            emit_threshold: -1.0,
        }
    }
}

/// Greedy non-maximum suppression. Stops once `limit` detections are kept,
/// which yields the same prefix as full suppression followed by truncation.
pub fn nms_top(mut dets: Vec<Detection>, iou_thresh: f64, limit: usize) -> Vec<Detection> {
    dets.sort_by(|a, b| a.rank_cmp(b));
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        if kept.len() >= limit {
            break;
        }
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_thresh) {
            kept.push(d);
        }
    }
    kept
}

pub fn nms(dets: Vec<Detection>, iou_thresh: f64) -> Vec<Detection> {
    nms_top(dets, iou_thresh, usize::MAX)
}

/// Every placement of `model` scoring above `threshold`.
pub fn emit_detections(pyr: &FeaturePyramid, model: &LinearModel, threshold: f64) -> Result<Vec<Detection>> {
    let id = ModelId::of(model)?;
    let [fh, fw, _] = model.dims;
    let mut out = Vec::new();
    for (level, map) in pyr.levels.iter().enumerate() {
        let s = score_map(map, model)?;
        for row in 0..s.rows {
            for col in 0..s.cols {
                let score = s.get(row, col) as f64;
                if score > threshold {
                    let placement = Placement { level, row, col };
                    out.push(Detection {
                        image: pyr.image_id.unwrap_or(0),
                        model: id,
                        bbox: pyr.cell_to_box(placement, fh, fw)?,
                        score,
                        placement,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Post-NMS part detections of one image, indexed by part type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartDetections {
    pub by_type: [Vec<Detection>; 3],
}

impl PartDetections {
    pub fn get(&self, t: PartType) -> &[Detection] {
        &self.by_type[t.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Detection> {
        self.by_type.iter().flatten()
    }

    /// Group detections of one image by part type; root detections are ignored.
    pub fn from_detections(dets: impl IntoIterator<Item = Detection>) -> Self {
        let mut out = PartDetections::default();
        for d in dets {
            if let Some(t) = d.model.part_type() {
                out.by_type[t.index()].push(d);
            }
        }
        out
    }
}

/// Score all part models over one pyramid, then suppress across the clusters of each type.
pub fn detect_parts(pyr: &FeaturePyramid, models: &[LinearModel], params: &DetectParams) -> Result<PartDetections> {
    let mut raw = PartDetections::default();
    for m in models {
        let t = ModelId::of(m)?
            .part_type()
            .ok_or_else(|| Error::ConfigInvalid("root model passed as a part model".into()))?;
        raw.by_type[t.index()].extend(emit_detections(pyr, m, params.emit_threshold)?);
    }
    let mut out = PartDetections::default();
    for (slot, dets) in out.by_type.iter_mut().zip(raw.by_type) {
        *slot = nms_top(dets, params.nms_iou, params.top_k);
    }
    Ok(out)
}

/// Person hypotheses from the root filter.
pub fn detect_instances(pyr: &FeaturePyramid, root: &LinearModel, params: &DetectParams) -> Result<Vec<Detection>> {
    if root.kind != ModelKind::Root {
        return Err(Error::ConfigInvalid(format!(
            "expected a root model, got {}",
            root.id()
        )));
    }
    let dets = emit_detections(pyr, root, params.emit_threshold)?;
    Ok(nms_top(dets, params.nms_iou, params.top_k))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssignedPart {
    pub detection: Detection,
    pub cluster: usize,
}

/// The best detection of each part type for one person; `None` marks an absent part.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PartAssignment {
    pub parts: [Option<AssignedPart>; 3],
}

impl PartAssignment {
    pub fn get(&self, t: PartType) -> Option<&AssignedPart> {
        self.parts[t.index()].as_ref()
    }
}

/// For each part type keep the highest-scoring detection centred inside the
/// person box, or inside `regions[t]` when a search region is given.
pub fn assign_parts(
    bbox: &BBox,
    dets: &PartDetections,
    absence_thresh: f64,
    regions: Option<&[Option<BBox>; 3]>,
) -> PartAssignment {
    let mut out = PartAssignment::default();
    for t in PartType::ALL {
        let area = regions.and_then(|r| r[t.index()]).unwrap_or(*bbox);
        let best = dets
            .get(t)
            .iter()
            .filter(|d| {
                let (cx, cy) = d.bbox.center();
                area.contains_point(cx, cy)
            })
            .min_by(|a, b| a.rank_cmp(b));
        out.parts[t.index()] = best.filter(|d| d.score >= absence_thresh).map(|d| AssignedPart {
            detection: *d,
            cluster: d.model.cluster(),
        });
    }
    out
}

/// For each ground-truth box, the highest-scoring detection overlapping it by
/// more than `min_iou`. A detection may serve several ground truths.
pub fn associate_detections(dets: &[Detection], gts: &[BBox], min_iou: f64) -> Vec<Option<usize>> {
    let matched: Vec<Option<usize>> = gts
        .iter()
        .map(|g| {
            (0..dets.len())
                .filter(|&i| iou(&dets[i].bbox, g) > min_iou)
                .min_by(|&a, &b| dets[a].rank_cmp(&dets[b]).then(a.cmp(&b)))
        })
        .collect();
    let mut used: Vec<usize> = matched.iter().flatten().copied().collect();
    let total = used.len();
    used.sort_unstable();
    used.dedup();
    if used.len() < total {
        log::info!("{} detection(s) matched more than one ground truth", total - used.len());
    }
    matched
}

#[derive(Serialize, Deserialize)]
struct DetectionLine {
    version: String,
    image: u32,
    model: String,
    #[serde(rename = "box")]
    bbox: BBox,
    score: f64,
    level: usize,
    cell: [usize; 2],
}

pub fn detections_to_jsonl(dets: &[Detection]) -> Result<String> {
    let mut out = String::new();
    for d in dets {
        let line = DetectionLine {
            version: DETS_VERSION.to_string(),
            image: d.image,
            model: d.model.to_string(),
            bbox: d.bbox,
            score: d.score,
            level: d.placement.level,
            cell: [d.placement.row, d.placement.col],
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn detections_from_jsonl(s: &str) -> Result<Vec<Detection>> {
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let d: DetectionLine = serde_json::from_str(l)?;
            if d.version != DETS_VERSION {
                return Err(Error::VersionMismatch {
                    expected: DETS_VERSION,
                    found: d.version,
                });
            }
            if !d.score.is_finite() {
                return Err(Error::Parse("non-finite detection score".into()));
            }
            Ok(Detection {
                image: d.image,
                model: d.model.parse()?,
                bbox: d.bbox,
                score: d.score,
                placement: Placement {
                    level: d.level,
                    row: d.cell[0],
                    col: d.cell[1],
                },
            })
        })
        .collect()
}

pub fn save_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, detections_to_jsonl(dets)?)?;
    Ok(())
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    detections_from_jsonl(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(t: PartType, cluster: usize, b: [f64; 4], score: f64) -> Detection {
        Detection {
            image: 0,
            model: ModelId::Part { part_type: t, cluster },
            bbox: BBox::try_from(b).unwrap(),
            score,
            placement: Placement {
                level: 0,
                row: 0,
                col: 0,
            },
        }
    }

    fn random_dets(rng: &mut impl Rng, n: usize) -> Vec<Detection> {
        (0..n)
            .map(|i| {
                let x = rng.gen_range(0.0..100.0);
                let y = rng.gen_range(0.0..100.0);
                let w = rng.gen_range(5.0..40.0);
                let h = rng.gen_range(5.0..40.0);
                let mut d = det(
                    PartType::Head,
                    rng.gen_range(0..4),
                    [x, y, x + w, y + h],
                    rng.gen_range(-2.0..2.0),
                );
                d.placement.row = i;
                d
            })
            .collect()
    }

    /// Suppression written as the textbook loop: repeatedly take the best
    /// remaining detection and delete everything overlapping it.
    fn nms_oracle(dets: &[Detection], thr: f64) -> Vec<Detection> {
        let mut rest: Vec<Detection> = dets.to_vec();
        let mut kept = Vec::new();
        while !rest.is_empty() {
            let mut bi = 0;
            for i in 1..rest.len() {
                if rest[i].rank_cmp(&rest[bi]).is_lt() {
                    bi = i;
                }
            }
            let best = rest.remove(bi);
            rest.retain(|d| iou(&d.bbox, &best.bbox) <= thr);
            kept.push(best);
        }
        kept
    }

    #[test]
    fn nms_examples() {
        let a = det(PartType::Head, 0, [0.0, 0.0, 10.0, 10.0], 0.5);
        assert_eq!(nms(vec![a], 0.3), vec![a]);
        let hi = det(PartType::Head, 1, [0.0, 0.0, 10.0, 10.0], 0.9);
        let lo = det(PartType::Head, 0, [0.0, 0.0, 10.0, 10.0], 0.8);
        assert_eq!(nms(vec![lo, hi], 0.3), vec![hi]);
    }

    #[test]
    fn nms_tie_prefers_lower_cluster() {
        let a = det(PartType::Head, 2, [0.0, 0.0, 10.0, 10.0], 0.5);
        let b = det(PartType::Head, 1, [1.0, 0.0, 11.0, 10.0], 0.5);
        assert_eq!(nms(vec![a, b], 0.3), vec![b]);
    }

    #[test]
    fn nms_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let dets = random_dets(&mut rng, 20);
            assert_eq!(nms(dets.clone(), 0.3), nms_oracle(&dets, 0.3));
            assert_eq!(
                nms_top(dets.clone(), 0.3, 4),
                nms_oracle(&dets, 0.3).into_iter().take(4).collect::<Vec<_>>()
            );
        }
    }

    proptest! {
        #[test]
        fn nms_is_idempotent_antichain(seed in any::<u64>(), n in 0usize..30, thr in 0.05f64..0.9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dets = random_dets(&mut rng, n);
            let kept = nms(dets, thr);
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].bbox, &kept[j].bbox) <= thr);
                }
            }
            prop_assert_eq!(nms(kept.clone(), thr), kept);
        }

        #[test]
        fn shrinking_box_never_raises_scores(seed in any::<u64>(), shrink in 0.0f64..30.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pd = PartDetections::default();
            for t in PartType::ALL {
                pd.by_type[t.index()] = random_dets(&mut rng, 15)
                    .into_iter()
                    .map(|mut d| { d.model = ModelId::Part { part_type: t, cluster: d.model.cluster() }; d })
                    .collect();
            }
            let big = BBox::new(10.0, 10.0, 110.0, 110.0).unwrap();
            let small = BBox::new(10.0 + shrink, 10.0 + shrink * 0.5, 110.0 - shrink, 110.0 - shrink * 1.2).unwrap();
            let a = assign_parts(&big, &pd, -0.1, None);
            let b = assign_parts(&small, &pd, -0.1, None);
            for t in PartType::ALL {
                let global = pd.get(t).iter().map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
                if let Some(p) = b.get(t) {
                    prop_assert!(p.detection.score <= a.get(t).unwrap().detection.score);
                }
                if let Some(p) = a.get(t) {
                    prop_assert!(p.detection.score <= global);
                }
            }
        }
    }

    #[test]
    fn assignment_examples() {
        let person = BBox::new(0.0, 0.0, 100.0, 200.0).unwrap();
        let mut pd = PartDetections::default();
        pd.by_type[0] = vec![det(PartType::Head, 3, [40.0, 10.0, 60.0, 30.0], 0.5)];
        pd.by_type[1] = vec![det(PartType::Torso, 0, [30.0, 40.0, 70.0, 100.0], -0.2)];
        let a = assign_parts(&person, &pd, -0.1, None);
        assert_eq!(a.get(PartType::Head).unwrap().cluster, 3);
        assert!(a.get(PartType::Torso).is_none());
        assert!(a.get(PartType::Legs).is_none());
    }

    #[test]
    fn assignment_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let mut pd = PartDetections::default();
            pd.by_type[2] = random_dets(&mut rng, 25)
                .into_iter()
                .map(|mut d| {
                    d.model = ModelId::Part {
                        part_type: PartType::Legs,
                        cluster: d.model.cluster(),
                    };
                    d
                })
                .collect();
            let x = rng.gen_range(0.0..60.0);
            let y = rng.gen_range(0.0..60.0);
            let person = BBox::new(x, y, x + 50.0, y + 70.0).unwrap();
            let got = assign_parts(&person, &pd, -0.1, None);
            let mut best: Option<Detection> = None;
            for d in pd.get(PartType::Legs) {
                let (cx, cy) = d.bbox.center();
                let inside = cx >= x && cx < x + 50.0 && cy >= y && cy < y + 70.0;
                if inside && best.map_or(true, |b| d.score > b.score) {
                    best = Some(*d);
                }
            }
            let want = best.filter(|b| b.score >= -0.1).map(|b| b.score);
            assert_eq!(got.get(PartType::Legs).map(|p| p.detection.score), want);
        }
    }

    #[test]
    fn search_region_overrides_box() {
        let person = BBox::new(0.0, 0.0, 100.0, 200.0).unwrap();
        let mut pd = PartDetections::default();
        pd.by_type[0] = vec![
            det(PartType::Head, 0, [40.0, 150.0, 60.0, 170.0], 0.9),
            det(PartType::Head, 1, [40.0, 10.0, 60.0, 30.0], 0.2),
        ];
        let regions = [Some(BBox::new(30.0, 0.0, 70.0, 40.0).unwrap()), None, None];
        let a = assign_parts(&person, &pd, -0.1, Some(&regions));
        assert_eq!(a.get(PartType::Head).unwrap().cluster, 1);
    }

    #[test]
    fn association_examples() {
        let gt = BBox::new(0.0, 0.0, 100.0, 100.0).unwrap();
        let d = |b: [f64; 4], s: f64| Detection {
            model: ModelId::Root,
            ..det(PartType::Head, 0, b, s)
        };
        // IoU 0.6 and 0.4
        assert_eq!(
            associate_detections(&[d([0.0, 0.0, 60.0, 100.0], 0.1)], &[gt], 0.5),
            vec![Some(0)]
        );
        assert_eq!(
            associate_detections(&[d([0.0, 0.0, 40.0, 100.0], 0.1)], &[gt], 0.5),
            vec![None]
        );
        // IoU 0.55 at 0.9 beats IoU 0.95 at 0.5
        let dets = [d([0.0, 0.0, 55.0, 100.0], 0.9), d([0.0, 0.0, 95.0, 100.0], 0.5)];
        assert_eq!(associate_detections(&dets, &[gt], 0.5), vec![Some(0)]);
        // non-exclusive
        assert_eq!(associate_detections(&dets, &[gt, gt], 0.5), vec![Some(0), Some(0)]);
    }

    #[test]
    fn model_id_roundtrip() {
        for s in ["root", "head/0", "legs/12"] {
            assert_eq!(s.parse::<ModelId>().unwrap().to_string(), s);
        }
        assert!("arm/1".parse::<ModelId>().is_err());
        assert!("head/x".parse::<ModelId>().is_err());
    }

    #[test]
    fn jsonl_roundtrip_and_version() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dets = random_dets(&mut rng, 5);
        let s = detections_to_jsonl(&dets).unwrap();
        assert_eq!(detections_from_jsonl(&s).unwrap(), dets);
        let bad = s.replace(DETS_VERSION, "dets-v0");
        assert!(matches!(
            detections_from_jsonl(&bad),
            Err(Error::VersionMismatch { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_detections(&dir.path().join("d.jsonl")),
            Err(Error::MissingArtifact(_))
        ));
    }
}
