use crate::error::{Error, Result};
use crate::features::{region_descriptor, FeatureExtractorSpec};
use crate::geometry::BBox;
use crate::keypoints::{box_from_keypoints, Keypoint, KeypointSet, Landmark, PartType};
use crate::raster::Raster;

/// Default neighbour count and search-region padding.
pub const DEFAULT_K: usize = 5;
pub const SEARCH_PAD: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct KnnEntry {
    pub image: u32,
    /// Unit-norm region descriptor of the instance box.
    pub descriptor: Vec<f32>,
    /// Keypoints in box coordinates, `(0, 0)` top-left and `(1, 1)` bottom-right.
    pub keypoints: KeypointSet,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnnIndex {
    pub entries: Vec<KnnEntry>,
}

pub fn normalize_to_box(k: &KeypointSet, b: &BBox) -> KeypointSet {
    map_points(k, |x, y| ((x - b.x1()) / b.width(), (y - b.y1()) / b.height()))
}

pub fn denormalize_from_box(k: &KeypointSet, b: &BBox) -> KeypointSet {
    map_points(k, |x, y| (b.x1() + x * b.width(), b.y1() + y * b.height()))
}

fn map_points(k: &KeypointSet, f: impl Fn(f64, f64) -> (f64, f64)) -> KeypointSet {
    let mut out = KeypointSet::default();
    for l in Landmark::ALL {
        let p = k.get(l);
        if p.visible {
            let (x, y) = f(p.x, p.y);
            out.set(l, Keypoint::visible(x, y));
        }
    }
    out
}

impl KnnIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(
        &mut self,
        image: u32,
        image_raster: &Raster,
        b: &BBox,
        k: &KeypointSet,
        spec: &FeatureExtractorSpec,
    ) -> Result<()> {
        self.entries.push(KnnEntry {
            image,
            descriptor: region_descriptor(image_raster, b, spec)?,
            keypoints: normalize_to_box(k, b),
        });
        Ok(())
    }

    /// The `k` most similar entries by cosine similarity, skipping entries
    /// from `exclude_image`. Ties go to the earlier entry.
    pub fn nearest(&self, query: &[f32], k: usize, exclude_image: Option<u32>) -> Result<Vec<usize>> {
        let qn = query.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        let mut sims: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| Some(e.image) != exclude_image)
            .map(|(i, e)| {
                let dot: f64 = e.descriptor.iter().zip(query).map(|(a, b)| *a as f64 * *b as f64).sum();
                let en = e.descriptor.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
                let sim = if qn > 0.0 && en > 0.0 { dot / (qn * en) } else { 0.0 };
                (sim, i)
            })
            .collect();
        if sims.is_empty() {
            return Err(Error::EmptyIndex);
        }
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(sims.into_iter().take(k.max(1)).map(|(_, i)| i).collect())
    }
}

/// Per-landmark mean of box-normalized keypoints; a landmark is visible if any
/// neighbour sees it, and averaged over those that do.
pub fn average_keypoints<'a>(sets: impl IntoIterator<Item = &'a KeypointSet>) -> KeypointSet {
    let mut sum = [(0.0f64, 0.0f64, 0usize); Landmark::COUNT];
    for k in sets {
        for (acc, p) in sum.iter_mut().zip(k.points()) {
            if p.visible {
                acc.0 += p.x;
                acc.1 += p.y;
                acc.2 += 1;
            }
        }
    }
    let mut out = KeypointSet::default();
    for (l, (sx, sy, n)) in Landmark::ALL.into_iter().zip(sum) {
        if n > 0 {
            out.set(l, Keypoint::visible(sx / n as f64, sy / n as f64));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointEstimate {
    pub neighbours: Vec<usize>,
    /// Estimated keypoints in image coordinates.
    pub keypoints: KeypointSet,
    /// Padded part boxes around the estimate; `None` when a part has too few landmarks.
    pub regions: [Option<BBox>; 3],
}

pub fn estimate_keypoints_knn(
    b: &BBox,
    image: &Raster,
    exclude_image: Option<u32>,
    index: &KnnIndex,
    k: usize,
    spec: &FeatureExtractorSpec,
) -> Result<KeypointEstimate> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let query = region_descriptor(image, b, spec)?;
    let neighbours = index.nearest(&query, k, exclude_image)?;
    let mean = average_keypoints(neighbours.iter().map(|&i| &index.entries[i].keypoints));
    let keypoints = denormalize_from_box(&mean, b);
    let regions = PartType::ALL.map(|t| box_from_keypoints(&keypoints, t, SEARCH_PAD).ok());
    Ok(KeypointEstimate {
        neighbours,
        keypoints,
        regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut impl Rng) -> KeypointSet {
        let mut k = KeypointSet::default();
        for l in Landmark::ALL {
            k.set(l, Keypoint::visible(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)));
        }
        k
    }

    fn index_of(rng: &mut impl Rng, n: usize, dim: usize) -> KnnIndex {
        KnnIndex {
            entries: (0..n)
                .map(|i| KnnEntry {
                    image: i as u32,
                    descriptor: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    keypoints: random_set(rng),
                })
                .collect(),
        }
    }

    #[test]
    fn box_normalization_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = random_set(&mut rng);
        let b = BBox::new(10.0, 20.0, 50.0, 100.0).unwrap();
        let back = normalize_to_box(&denormalize_from_box(&k, &b), &b);
        for (p, q) in back.points().iter().zip(k.points()) {
            assert!((p.x - q.x).abs() < 1e-12 && (p.y - q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn k1_returns_the_neighbour() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = index_of(&mut rng, 10, 6);
        let q = idx.entries[4].descriptor.iter().map(|v| v * 3.0).collect::<Vec<_>>();
        assert_eq!(idx.nearest(&q, 1, None).unwrap(), vec![4]);
        assert_ne!(idx.nearest(&q, 1, Some(4)).unwrap(), vec![4]);
        let avg = average_keypoints([&idx.entries[4].keypoints]);
        assert_eq!(avg, idx.entries[4].keypoints);
    }

    #[test]
    fn identical_neighbours_average_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_set(&mut rng);
        let avg = average_keypoints([&k, &k]);
        for (p, q) in avg.points().iter().zip(k.points()) {
            assert!((p.x - q.x).abs() < 1e-12 && (p.y - q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn k5_is_the_plain_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sets: Vec<KeypointSet> = (0..5).map(|_| random_set(&mut rng)).collect();
        let avg = average_keypoints(&sets);
        for l in Landmark::ALL {
            let mx = sets.iter().map(|s| s.get(l).x).sum::<f64>() / 5.0;
            let my = sets.iter().map(|s| s.get(l).y).sum::<f64>() / 5.0;
            assert!((avg.get(l).x - mx).abs() < 1e-12);
            assert!((avg.get(l).y - my).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_orders_by_cosine() {
        let idx = KnnIndex {
            entries: [[1.0, 0.0], [0.6, 0.8], [-1.0, 0.0], [0.8, 0.6]]
                .into_iter()
                .enumerate()
                .map(|(i, d)| KnnEntry {
                    image: i as u32,
                    descriptor: d.to_vec(),
                    keypoints: KeypointSet::default(),
                })
                .collect(),
        };
        assert_eq!(idx.nearest(&[2.0, 0.0], 3, None).unwrap(), vec![0, 3, 1]);
    }

    #[test]
    fn empty_index_is_an_error() {
        let img = Raster::from_fn(64, 64, |x, _| x as f32 / 64.0);
        let b = BBox::new(0.0, 0.0, 32.0, 64.0).unwrap();
        let r = estimate_keypoints_knn(
            &b,
            &img,
            None,
            &KnnIndex::default(),
            5,
            &FeatureExtractorSpec::default(),
        );
        assert!(matches!(r, Err(Error::EmptyIndex)));
        let one = KnnIndex {
            entries: vec![KnnEntry {
                image: 3,
                descriptor: vec![1.0],
                keypoints: KeypointSet::default(),
            }],
        };
        assert!(matches!(one.nearest(&[1.0], 1, Some(3)), Err(Error::EmptyIndex)));
    }
}
