use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// Greedy matching of ranked detections to ground truths of one image. Each
/// detection takes the unmatched ground truth it overlaps most and is a true
/// positive if that overlap exceeds `sigma`.
pub fn match_detections(ranked: &[BBox], gts: &[BBox], sigma: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    ranked
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let o = iou(d, g);
                if best.map_or(true, |(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            match best {
                Some((j, o)) if o > sigma => {
                    taken[j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// All-points average precision: area under the monotone precision envelope.
pub fn average_precision(flags: &[bool], positives: usize) -> Result<f64> {
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let tps = flags.iter().filter(|f| **f).count();
    if tps > positives {
        return Err(Error::ShapeMismatch(format!(
            "{tps} true positives for {positives} positives"
        )));
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, f) in flags.iter().enumerate() {
        if *f {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let sum: f64 = flags.iter().zip(&precision).filter(|(f, _)| **f).map(|(_, p)| p).sum();
    Ok(sum / positives as f64)
}

/// A ranked list of scored hits with its precision/recall curve.
#[derive(Clone, Debug, PartialEq)]
pub struct PRCurve {
    pub ranked: Vec<(f64, bool)>,
    pub positives: usize,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub ap: f64,
}

impl PRCurve {
    /// Rank by descending score; equal scores keep their input order.
    pub fn new(mut hits: Vec<(f64, bool)>, positives: usize) -> Result<Self> {
        hits.sort_by(|a, b| b.0.total_cmp(&a.0));
        let flags: Vec<bool> = hits.iter().map(|h| h.1).collect();
        let ap = average_precision(&flags, positives)?;
        let mut tp = 0usize;
        let mut precision = Vec::with_capacity(flags.len());
        let mut recall = Vec::with_capacity(flags.len());
        for (i, f) in flags.iter().enumerate() {
            tp += *f as usize;
            precision.push(tp as f64 / (i + 1) as f64);
            recall.push(tp as f64 / positives as f64);
        }
        Ok(PRCurve {
            ranked: hits,
            positives,
            precision,
            recall,
            ap,
        })
    }
}
