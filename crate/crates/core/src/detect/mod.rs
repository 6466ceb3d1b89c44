//! Multi-scale filter scoring, suppression, part assignment and nearest-neighbour
//! keypoint estimates.

mod knn;
mod parts;
mod score;

pub use knn::{
    average_keypoints, denormalize_from_box, estimate_keypoints_knn, normalize_to_box, KeypointEstimate, KnnEntry,
    KnnIndex, DEFAULT_K, SEARCH_PAD,
};
pub use parts::{
    assign_parts, associate_detections, detect_instances, detect_parts, detections_from_jsonl, detections_to_jsonl,
    emit_detections, load_detections, nms, nms_top, save_detections, AssignedPart, DetectParams, Detection, ModelId,
    PartAssignment, PartDetections, DETS_VERSION,
};
pub use score::{score_map, score_pyramid, ScoreMap};
