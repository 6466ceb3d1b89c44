//! Cluster part keypoint configurations of a synthetic training split.

use partforge::partdesign::{cluster_parts, ClusterConfig};
use partforge::synth::{make_split, DatasetConfig, Split, SplitCounts};
use partforge::{InstanceRef, PartType};

fn run(train: usize, seed: u64) -> partforge::Result<()> {
    let config = DatasetConfig {
        counts: SplitCounts { train, val: 0, test: 0 },
        seed,
        ..DatasetConfig::default()
    };
    let images = make_split(&config, Split::Train)?;
    let instances = images.iter().flat_map(|img| {
        img.image
            .instances
            .iter()
            .enumerate()
            .map(move |(i, inst)| (InstanceRef::new(img.id, i as u32), inst))
    });
    let inventory = cluster_parts(instances, &ClusterConfig::default(), seed)?;
    for part in PartType::ALL {
        let sizes: Vec<usize> = inventory.of_type(part).map(|c| c.members.len()).collect();
        println!("{part}: {} clusters, sizes {:?}", sizes.len(), sizes);
    }
    Ok(())
}

fn main() -> partforge::Result<()> {
    let train = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    run(train, 0)
}
