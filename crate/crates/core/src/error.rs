use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2})")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("box is empty after clipping to the image")]
    EmptyAfterClip,
    #[error("fewer than two visible landmarks for part {0}")]
    InsufficientKeypoints(&'static str),
    #[error("landmark {0} is not visible")]
    MissingKeypoints(&'static str),
    #[error("all landmarks coincide")]
    DegenerateConfig,
    #[error("empty input")]
    EmptyInput,
    #[error("canvas {width}x{height} is too small for figures of scale {min_scale}")]
    CanvasTooSmall { width: u32, height: u32, min_scale: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("image side {side} is below the minimum pyramid side {min_side}")]
    ImageTooSmall { side: usize, min_side: usize },
    #[error("raster {width}x{height} is smaller than one cell of {cell} px")]
    RasterTooSmall { width: usize, height: usize, cell: usize },
    #[error("placement ({level}, {row}, {col}) does not fit the pyramid")]
    PlacementOutOfRange { level: usize, row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("channel mismatch: model has {model}, features have {features}")]
    ChannelMismatch { model: usize, features: usize },
    #[error("class {0} has no positive or no negative examples")]
    EmptyClass(String),
    #[error("image {0} contains people and cannot supply negatives")]
    NonEmptyImage(u32),
    #[error("keypoint index is empty")]
    EmptyIndex,
    #[error("box height {0} is too small to split")]
    BoxTooSmall(f64),
    #[error("no positive examples")]
    NoPositives,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported schema version {found:?}, expected {expected:?}")]
    VersionMismatch { expected: &'static str, found: String },
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("malformed artifact: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}
