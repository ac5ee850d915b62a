//! The skeleton-to-mesh model: positional and order encoding, the global
//! spatial descriptor, per-axis bone regressors, and stage-1 training.

pub mod encoding;
pub mod model;
pub mod train;

pub use encoding::{positional_encode, PEConfig};
pub use model::{
    count_macs, count_params, s2m_forward, S2MCache, S2MConfig, S2MGrads, Skeleton2Mesh, AXES,
};
pub use train::{
    evaluate_stage1, patch_loss, stage1_loss, train_stage1, train_stage1_with, validation_split,
    Stage1Config, TrainReport, TrainingPair,
};
