//! Train part detectors on a synthetic split and report AP per part type and IoU threshold.

use std::time::Instant;

use partforge::detect::DetectParams;
use partforge::eval::{evaluate_parts, EvalConfig, EvalImage};
use partforge::features::{FeatureExtractorSpec, PyramidConfig};
use partforge::partdesign::{cluster_parts, ClusterConfig};
use partforge::pipeline::{detect_parts_batch, train_part_models, training_set, Scene};
use partforge::svm::DetectorTrainingConfig;
use partforge::synth::{make_split, DatasetConfig, Split, SplitCounts};

fn main() -> partforge::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let train = args.next().flatten().unwrap_or(500);
    let val = args.next().flatten().unwrap_or(200);
    let seed = 0;
    let start = Instant::now();
    let data = DatasetConfig {
        counts: SplitCounts { train, val, test: 0 },
        seed,
        ..DatasetConfig::default()
    };
    let train_scenes: Vec<Scene> = make_split(&data, Split::Train)?.iter().map(Scene::from).collect();
    let val_scenes: Vec<Scene> = make_split(&data, Split::Val)?.iter().map(Scene::from).collect();
    let spec = FeatureExtractorSpec::default();
    let pyr = PyramidConfig::default();
    let set = training_set(&train_scenes, &spec, &pyr)?;
    let clusters = ClusterConfig::default();
    let inventory = cluster_parts(set.instance_refs(), &clusters, seed)?;
    println!(
        "{} clusters ({:.1}s)",
        inventory.clusters.len(),
        start.elapsed().as_secs_f64()
    );

    let models = train_part_models(
        &set,
        &inventory,
        &DetectorTrainingConfig::default(),
        clusters.min_positives,
        seed,
    )?;
    println!("{} part models ({:.1}s)", models.len(), start.elapsed().as_secs_f64());

    let dets = detect_parts_batch(&val_scenes, &models, &spec, &pyr, &DetectParams::default())?;
    let images: Vec<EvalImage> = val_scenes
        .iter()
        .map(|s| EvalImage {
            id: s.id,
            width: s.raster.width(),
            height: s.raster.height(),
            instances: &s.instances,
        })
        .collect();
    let table = evaluate_parts(&images, &dets, &EvalConfig::default())?;
    print!("{}", table.render());
    println!("done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
