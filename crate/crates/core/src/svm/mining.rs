use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::score_pyramid;
use crate::error::{Error, Result};
use crate::features::{FeaturePyramid, Placement};
use crate::svm::model::LinearModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub rounds: usize,
    pub cache_cap: usize,
    pub per_image_cap: usize,
    /// Random placements per negative image used to train the first model.
    pub initial_per_image: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            rounds: 3,
            cache_cap: 50_000,
            per_image_cap: 200,
            initial_per_image: 20,
        }
    }
}

/// A person-free image prepared for mining.
#[derive(Clone, Debug)]
pub struct NegativeImage {
    pub id: u32,
    pub num_instances: usize,
    pub pyramid: FeaturePyramid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CachedNegative {
    pub features: Vec<f32>,
    pub image: u32,
    pub placement: Placement,
    /// Score under the model that last ranked this entry.
    pub score: f32,
}

#[derive(Clone, Debug, Default)]
pub struct MiningState {
    pub cache: Vec<CachedNegative>,
    pub cap: usize,
    pub rounds: usize,
    keys: HashSet<(u32, Placement)>,
}

impl MiningState {
    pub fn new(cap: usize) -> Self {
        MiningState {
            cap,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    pub fn contains(&self, image: u32, p: Placement) -> bool {
        self.keys.contains(&(image, p))
    }

    /// Add entries not already cached; returns how many were new.
    pub fn extend(&mut self, entries: impl IntoIterator<Item = CachedNegative>) -> usize {
        let mut added = 0;
        for e in entries {
            if self.keys.insert((e.image, e.placement)) {
                self.cache.push(e);
                added += 1;
            }
        }
        added
    }

    /// Rescore with `model` and drop the lowest-scoring entries beyond the cap.
    pub fn enforce_cap(&mut self, model: &LinearModel) {
        if self.cache.len() <= self.cap {
            return;
        }
        for e in &mut self.cache {
            e.score = model.score(&e.features) as f32;
        }
        self.cache.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.image.cmp(&b.image))
                .then(a.placement.cmp(&b.placement))
        });
        for e in self.cache.drain(self.cap..) {
            self.keys.remove(&(e.image, e.placement));
        }
    }

    pub fn features(&self) -> Vec<&[f32]> {
        self.cache.iter().map(|e| e.features.as_slice()).collect()
    }
}

fn check_negative(img: &NegativeImage) -> Result<()> {
    if img.num_instances > 0 {
        return Err(Error::NonEmptyImage(img.id));
    }
    Ok(())
}

/// Placements of one pyramid violating the negative margin (`score > -1`), best
/// first (ties by placement), at most `cap` of them.
pub fn margin_violations(model: &LinearModel, pyr: &FeaturePyramid, cap: usize) -> Result<Vec<(f32, Placement)>> {
    let maps = score_pyramid(pyr, model)?;
    let mut found = Vec::new();
    for (level, map) in maps.iter().enumerate() {
        for row in 0..map.rows {
            for col in 0..map.cols {
                let s = map.get(row, col);
                if s > -1.0 {
                    found.push((s, Placement { level, row, col }));
                }
            }
        }
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    found.truncate(cap);
    Ok(found)
}

/// Mine every image in parallel and add the new hard negatives to the cache.
/// Returns the number of entries added.
pub fn mine_hard_negatives(
    model: &LinearModel,
    images: &[NegativeImage],
    per_image_cap: usize,
    state: &mut MiningState,
) -> Result<usize> {
    for img in images {
        check_negative(img)?;
    }
    let [fh, fw, _] = model.dims;
    let mined: Vec<Vec<CachedNegative>> = images
        .par_iter()
        .map(|img| {
            let hits = margin_violations(model, &img.pyramid, per_image_cap)?;
            hits.into_iter()
                .map(|(score, p)| {
                    Ok(CachedNegative {
                        features: img.pyramid.levels[p.level].window(p.row, p.col, fh, fw)?,
                        image: img.id,
                        placement: p,
                        score,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let added = state.extend(mined.into_iter().flatten());
    state.rounds += 1;
    Ok(added)
}

/// Uniformly random valid placements, `per_image` per image, drawn from a seeded stream.
pub fn random_negatives(
    images: &[NegativeImage],
    dims: [usize; 3],
    per_image: usize,
    seed: u64,
) -> Result<Vec<CachedNegative>> {
    let [fh, fw, _] = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for img in images {
        check_negative(img)?;
        let counts: Vec<usize> = img
            .pyramid
            .levels
            .iter()
            .map(|m| {
                if m.rows() >= fh && m.cols() >= fw {
                    (m.rows() - fh + 1) * (m.cols() - fw + 1)
                } else {
                    0
                }
            })
            .collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            continue;
        }
        for _ in 0..per_image {
            let mut k = rng.gen_range(0..total);
            let mut level = 0;
            while k >= counts[level] {
                k -= counts[level];
                level += 1;
            }
            let cols = img.pyramid.levels[level].cols() - fw + 1;
            let p = Placement {
                level,
                row: k / cols,
                col: k % cols,
            };
            out.push(CachedNegative {
                features: img.pyramid.levels[level].window(p.row, p.col, fh, fw)?,
                image: img.id,
                placement: p,
                score: 0.0,
            });
        }
    }
    Ok(out)
}
