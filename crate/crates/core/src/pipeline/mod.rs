//! End-to-end stages over in-memory scenes, the experiment configuration, and
//! the file-based commands built on them.

mod benchmark;
mod classifying;
mod commands;
mod config;
mod stages;

pub use benchmark::{eval_images, instance_labels, run_benchmark, BenchmarkOutcome};
pub use classifying::{
    build_knn_index, describe_scene, describe_scenes, DescribeContext, DescribedInstance, Precomputed,
};
pub use commands::{load_scenes, run, run_all, Command, Layout};
pub use config::{apply_override, ClassifierConfig, DetectionConfig, ExperimentConfig};
pub use stages::{detect_instances_batch, detect_parts_batch, train_part_models, train_root, training_set, Scene};
