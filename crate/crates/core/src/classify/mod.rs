//! Action and attribute classifiers over concatenated instance and part descriptors.

mod bank;
mod context;
mod descriptor;
mod preds;

pub use bank::{predict_linear, train_classifiers, train_linear_bank, ClassifierBank, BANK_VERSION};
pub use context::{
    context_features, load_object_scores, object_classes, object_vector, ContextRescorer, ObjectScores,
    RESCORER_VERSION,
};
pub use descriptor::{assemble_descriptor, sub_boxes, three_way_split, InstanceDescriptor, Mode, Variant};
pub use preds::{load_predictions, save_predictions, Prediction, PREDS_VERSION};
