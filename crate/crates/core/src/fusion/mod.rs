//! Multi-view feature fusion on top of a locked skeleton-to-mesh model, its
//! training loss and loop, and the end-to-end reconstruction pipeline.

pub mod features;
pub mod loss;
pub mod mfi;
pub mod train;

pub use features::{gather_bone_features, BoneFeatureSet};
pub use loss::{stage2_loss, Geometry, LossGrads, LossTerms, LossWeights};
pub use mfi::{
    count_macs_mgfp, count_params_mgfp, mfi_forward, MfiCache, MfiGrads, MfiParams, MgfpModel,
};
pub use train::{
    estimate_skeleton, evaluate_cascade, evaluate_mgfp, prepare_example, reconstruct,
    stage2_batch_loss, synthesize_examples, train_stage2, train_stage2_with, Reconstruction,
    Stage2Config, Stage2Example, Stage2Report,
};
