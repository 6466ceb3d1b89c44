use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::figure::{sample_figure_with, FigureConfig};
use super::render::{render, SynthImage};
use crate::error::{Error, Result};
use crate::keypoints::{Action, InstanceRecord};
use crate::raster::Raster;
use crate::seed::mix;

pub const DATASET_VERSION: &str = "synthgen-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Image ids of a split start here, so ids never collide across splits.
    pub fn id_base(self) -> u32 {
        match self {
            Split::Train => 0,
            Split::Val => 1_000_000,
            Split::Test => 2_000_000,
        }
    }

    fn salt(self) -> u64 {
        match self {
            Split::Train => 0x7472_6169_6e00_0000,
            Split::Val => 0x7661_6c00_0000_0000,
            Split::Test => 0x7465_7374_0000_0000,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub counts: SplitCounts,
    pub seed: u64,
    pub person_free_fraction: f64,
    pub two_figure_fraction: f64,
    /// Fraction of figures pushed against an image border so that some landmarks fall off-canvas.
    pub truncation_fraction: f64,
    pub width: usize,
    pub height: usize,
    pub clutter_level: f64,
    pub figure: FigureConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            counts: SplitCounts {
                train: 500,
                val: 200,
                test: 200,
            },
            seed: 0,
            person_free_fraction: 0.3,
            two_figure_fraction: 0.25,
            truncation_fraction: 0.05,
            width: 320,
            height: 320,
            clutter_level: 1.0,
            figure: FigureConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::ConfigInvalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("person_free_fraction", self.person_free_fraction)?;
        unit("two_figure_fraction", self.two_figure_fraction)?;
        unit("truncation_fraction", self.truncation_fraction)?;
        if !(self.clutter_level >= 0.0 && self.clutter_level.is_finite()) {
            return Err(Error::ConfigInvalid("clutter_level must be >= 0".into()));
        }
        let s = &self.figure.scale;
        if !(s.lo > 8.0 && s.hi >= s.lo) {
            return Err(Error::ConfigInvalid("figure scale range must exceed 8 px".into()));
        }
        if (self.width as f64) < 4.0 * s.lo || (self.height as f64) < 4.0 * s.lo {
            return Err(Error::CanvasTooSmall {
                width: self.width as u32,
                height: self.height as u32,
                min_scale: s.lo,
            });
        }
        Ok(())
    }
}

/// One annotated image of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetImage {
    pub id: u32,
    pub image: SynthImage,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<DatasetImage>,
    pub val: Vec<DatasetImage>,
    pub test: Vec<DatasetImage>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[DatasetImage] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// SplitMix64 finalizer; turns structured seeds into well-spread RNG seeds.
pub(crate) fn image_seed(dataset_seed: u64, split: Split, index: usize) -> u64 {
    mix(mix(dataset_seed ^ split.salt()) ^ index as u64)
}

/// Indices of the person-free images of a split: exactly `round(fraction * n)` of them.
fn person_free_mask(config: &DatasetConfig, split: Split, n: usize) -> Vec<bool> {
    let k = (config.person_free_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed ^ split.salt() ^ 0x5eed));
    order.shuffle(&mut rng);
    let mut mask = vec![false; n];
    for &i in &order[..k.min(n)] {
        mask[i] = true;
    }
    mask
}

/// Render one image of a split. Each image owns its RNG stream, so images can
/// be produced in any order or in parallel with identical results.
pub fn generate_image(config: &DatasetConfig, split: Split, index: usize, person_free: bool) -> Result<DatasetImage> {
    let seed = image_seed(config.seed, split, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (config.width as f64, config.height as f64);
    let mut figures = Vec::new();
    if !person_free {
        let count = if rng.gen_bool(config.two_figure_fraction) { 2 } else { 1 };
        // The first figure cycles through pose classes so small splits stay balanced.
        let offset = (mix(config.seed ^ split.salt()) % 4) as usize;
        for slot in 0..count {
            let pose = if slot == 0 {
                Action::ALL[(index + offset) % 4]
            } else {
                Action::ALL[rng.gen_range(0..4)]
            };
            let mut f = sample_figure_with(&mut rng, pose, &config.figure);
            let t = f.scale;
            let (lo, hi) = if count == 1 {
                (0.9 * t, w - 0.9 * t)
            } else if slot == 0 {
                (0.9 * t, w * 0.5 - 0.3 * t)
            } else {
                (w * 0.5 + 0.3 * t, w - 0.9 * t)
            };
            let mut x = if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                0.5 * (lo + hi)
            };
            if rng.gen_bool(config.truncation_fraction) {
                x = if x < w * 0.5 {
                    rng.gen_range(0.1 * t..0.5 * t)
                } else {
                    w - rng.gen_range(0.1 * t..0.5 * t)
                };
            }
            let (ylo, yhi) = (1.95 * t, h - 1.15 * t);
            let y = if yhi > ylo {
                rng.gen_range(ylo..yhi)
            } else {
                0.5 * (ylo + yhi)
            };
            f.anchor = (x, y);
            figures.push(f);
        }
    }
    let clutter_seed = rng.gen();
    let image = render(
        &figures,
        config.width,
        config.height,
        config.clutter_level,
        clutter_seed,
    )?;
    Ok(DatasetImage {
        id: split.id_base() + index as u32,
        image,
    })
}

pub fn make_split(config: &DatasetConfig, split: Split) -> Result<Vec<DatasetImage>> {
    let n = config.counts.get(split);
    let mask = person_free_mask(config, split, n);
    (0..n)
        .into_par_iter()
        .map(|i| generate_image(config, split, i, mask[i]))
        .collect()
}

pub fn make_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    Ok(Dataset {
        train: make_split(config, Split::Train)?,
        val: make_split(config, Split::Val)?,
        test: make_split(config, Split::Test)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u32,
    pub file: String,
    pub width: usize,
    pub height: usize,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAnnotations {
    pub version: String,
    pub split: Split,
    pub images: Vec<ImageRecord>,
}

/// A split on disk: annotations plus the directory holding its PNGs.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub dir: PathBuf,
    pub annotations: SplitAnnotations,
}

impl SplitData {
    pub fn images(&self) -> &[ImageRecord] {
        &self.annotations.images
    }

    pub fn load_raster(&self, record: &ImageRecord) -> Result<Raster> {
        Raster::load_png(&self.dir.join(&record.file))
    }
}

pub fn split_dir(root: &Path, split: Split) -> PathBuf {
    root.join(split.name())
}

pub fn write_split(root: &Path, split: Split, images: &[DatasetImage]) -> Result<()> {
    let dir = split_dir(root, split);
    fs::create_dir_all(&dir)?;
    let records = images
        .iter()
        .map(|img| {
            let file = format!("{:07}.png", img.id);
            img.image.raster.save_png(&dir.join(&file))?;
            Ok(ImageRecord {
                id: img.id,
                file,
                width: img.image.raster.width(),
                height: img.image.raster.height(),
                instances: img.image.instances.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ann = SplitAnnotations {
        version: DATASET_VERSION.to_string(),
        split,
        images: records,
    };
    fs::write(dir.join("annotations.json"), serde_json::to_vec_pretty(&ann)?)?;
    Ok(())
}

pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    for split in Split::ALL {
        write_split(root, split, dataset.split(split))?;
    }
    Ok(())
}

pub fn load_split(root: &Path, split: Split) -> Result<SplitData> {
    let dir = split_dir(root, split);
    let path = dir.join("annotations.json");
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let value: serde_json::Value = serde_json::from_slice(&fs::read(&path)?)?;
    let version = value.get("version").and_then(|v| v.as_str()).unwrap_or("");
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            expected: DATASET_VERSION,
            found: version.to_string(),
        });
    }
    let annotations: SplitAnnotations = serde_json::from_value(value)?;
    Ok(SplitData { dir, annotations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::figure::classify_pose;

    fn small(train: usize, val: usize, test: usize, seed: u64) -> DatasetConfig {
        DatasetConfig {
            counts: SplitCounts { train, val, test },
            seed,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn person_free_count_is_exact() {
        let cfg = small(100, 20, 20, 4);
        let ds = make_dataset(&cfg).unwrap();
        let empty = ds.train.iter().filter(|i| i.image.instances.is_empty()).count();
        assert_eq!(empty, 30);
        assert_eq!(ds.val.len(), 20);
        assert_eq!(ds.val.iter().filter(|i| i.image.instances.is_empty()).count(), 6);
    }

    #[test]
    fn zero_counts_give_empty_splits() {
        let ds = make_dataset(&small(0, 0, 0, 1)).unwrap();
        assert!(ds.train.is_empty() && ds.val.is_empty() && ds.test.is_empty());
    }

    #[test]
    fn invalid_fraction_rejected() {
        let cfg = DatasetConfig {
            person_free_fraction: 1.5,
            ..DatasetConfig::default()
        };
        assert!(matches!(make_dataset(&cfg), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn split_ids_and_seeds_are_disjoint() {
        let cfg = small(5, 5, 5, 2);
        let ds = make_dataset(&cfg).unwrap();
        assert_ne!(ds.train[0].image.raster, ds.val[0].image.raster);
        assert!(ds.val.iter().all(|i| i.id >= 1_000_000 && i.id < 2_000_000));
    }

    #[test]
    fn labels_follow_joint_angles() {
        let ds = make_dataset(&small(40, 0, 0, 9)).unwrap();
        for img in &ds.train {
            for (inst, fig) in img.image.instances.iter().zip(&img.image.figures) {
                assert_eq!(inst.action, classify_pose(&fig.joints));
            }
        }
    }

    #[test]
    fn parallel_and_serial_generation_agree() {
        let cfg = small(6, 0, 0, 11);
        let par = make_split(&cfg, Split::Train).unwrap();
        let mask = person_free_mask(&cfg, Split::Train, 6);
        for (i, img) in par.iter().enumerate() {
            assert_eq!(&generate_image(&cfg, Split::Train, i, mask[i]).unwrap(), img);
        }
    }

    #[test]
    fn label_marginals_stable_across_seeds() {
        let frac = |seed| {
            let ds = make_dataset(&small(200, 0, 0, seed)).unwrap();
            let insts: Vec<_> = ds.train.iter().flat_map(|i| i.image.instances.iter()).collect();
            let n = insts.len() as f64;
            let sitting = insts.iter().filter(|i| i.action == Action::Sitting).count() as f64 / n;
            let hat = insts
                .iter()
                .filter(|i| i.attributes.get(crate::keypoints::Attribute::HasHat) == Some(true))
                .count() as f64
                / n;
            (sitting, hat)
        };
        let (s1, h1) = frac(1);
        let (s2, h2) = frac(2);
        assert!((s1 - s2).abs() <= 0.1);
        assert!((h1 - h2).abs() <= 0.1);
    }

    #[test]
    fn disk_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_dataset(&small(3, 1, 1, 5)).unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let split = load_split(dir.path(), Split::Train).unwrap();
        assert_eq!(split.images().len(), 3);
        for (rec, img) in split.images().iter().zip(&ds.train) {
            assert_eq!(rec.instances, img.image.instances);
            assert_eq!(split.load_raster(rec).unwrap(), img.image.raster);
        }
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("train/annotations.json")).unwrap()).unwrap();
        assert_eq!(v["version"], "synthgen-v1");
        assert!(v["images"][0]["file"].is_string());
    }
}
