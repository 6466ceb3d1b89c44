//! Deterministic synthetic "people" with full ground truth.
//!
//! Actions are fixed by pose and attributes by appearance, so body parts carry
//! real signal: leg configuration separates sitting from standing, head
//! decorations decide `has_hat` and `long_hair`.

mod dataset;
mod figure;
mod render;

pub use dataset::{
    generate_image, load_split, make_dataset, make_split, split_dir, write_dataset, write_split, Dataset,
    DatasetConfig, DatasetImage, ImageRecord, Split, SplitAnnotations, SplitCounts, SplitData, DATASET_VERSION,
};
pub use figure::{
    classify_pose, sample_figure, Appearance, FigureConfig, FigureSpec, Interval, JointAngles, PoseRanges,
};
pub use render::{instance_for, render, SynthImage, INSTANCE_BOX_PAD};
