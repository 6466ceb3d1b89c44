//! Linear SVMs with an exact unregularized bias, hard negative mining, and
//! training of part and root filters.

mod mining;
mod model;
mod solver;
mod train;

pub use mining::{
    margin_violations, mine_hard_negatives, random_negatives, CachedNegative, MiningConfig, MiningState, NegativeImage,
};
pub use model::{load_models, save_models, LinearModel, ModelKind, TrainMeta, MODEL_VERSION};
pub use solver::{primal_objective, train_svm, SolverConfig, SolverRoute, SvmSolution};
pub use train::{
    part_positives, root_positives, train_detector, train_part_model, train_root_model, trainable,
    DetectorTrainingConfig, RoundRecord, TrainingImage, TrainingSet, TrainingTrace, PART_BOX_PAD,
};
