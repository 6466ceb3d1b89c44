//! Cell features, scale pyramids and the mapping between filter placements and image boxes.

mod extractor;
mod pyramid;
mod region;

pub use extractor::{extract_features, ExtractorKind, FeatureExtractorSpec, FeatureMap};
pub use pyramid::{
    build_pyramid, feature_pyramid, gaussian_pyramid, FeaturePyramid, Placement, PyramidConfig, DEFAULT_MIN_SIDE,
    DEFAULT_RATIO,
};
pub use region::{l2_normalize, region_descriptor};
