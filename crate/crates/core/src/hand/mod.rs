//! Hand kinematics, the built-in template mesh, per-bone decomposition and
//! the synthetic multi-view data generator.

pub mod decomposition;
pub mod frame;
pub mod kinematics;
pub mod noise;
pub mod rig;
pub mod synth;
pub mod template;
pub mod tree;

pub use decomposition::{
    build_decomposition, decompose_mesh, recover_mesh, recover_mesh_backward, BonePatches,
    DecompositionSpec, MANO_BONE_COUNTS, MANO_VERTEX_COUNT, PATCH_CAPACITY,
};
pub use frame::{bone_frame, frame_from_points};
pub use kinematics::{
    bone_transforms, forward_kinematics, lbs_mesh, lbs_mesh_with, sample_pose, Pose, PoseLimits,
};
pub use noise::inject_noise;
pub use rig::{make_rig, RigConfig};
pub use synth::{sample_seed, synthesize_pose, synthesize_sample, SynthConfig, SyntheticSample};
pub use template::{builtin_rest_skeleton, HandTemplate};
pub use tree::{
    bones_from_skeleton, BoneSet, HandSkeleton, KinematicTree, NUM_BONES, NUM_JOINTS, ROOT,
};

/// Default duplication threshold on the second-largest skin weight.
pub const DEFAULT_DUP_THRESHOLD: f64 = 0.3;
