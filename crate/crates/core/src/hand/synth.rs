use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kinematics::{forward_kinematics, lbs_mesh_with, sample_pose_for, Pose, PoseLimits};
use super::template::HandTemplate;
use super::tree::{HandSkeleton, KinematicTree, NUM_JOINTS, ROOT};
use crate::camera::heatmap::add_gaussian;
use crate::camera::{
    image_to_grid, CameraRig, FeatureMap, Grid, Heatmap, HEATMAP_SIGMA, HEATMAP_SIZE,
};
use crate::error::Result;

/// How the heatmap and feature oracle corrupts and encodes each view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub pose: PoseLimits,
    /// Uniform per-axis half-range of the hand center around the rig target, mm.
    pub placement_jitter_mm: f64,
    /// Standard deviation of the heatmap peak displacement, heatmap-grid px.
    pub heatmap_jitter_px: f64,
    /// Standard deviation of additive heatmap value noise (clamped at 0).
    pub heatmap_value_noise: f64,
    pub feature_channels: usize,
    /// Width of the feature bumps, heatmap-grid px.
    pub feature_sigma_px: f64,
    /// Fixes the per-channel feature amplitudes for a whole dataset.
    pub feature_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pose: PoseLimits::default(),
            placement_jitter_mm: 10.0,
            heatmap_jitter_px: 1.0,
            heatmap_value_noise: 0.02,
            feature_channels: 128,
            feature_sigma_px: 3.0,
            feature_seed: 0x5eed,
        }
    }
}

impl SynthConfig {
    pub fn clean() -> Self {
        Self {
            heatmap_jitter_px: 0.0,
            heatmap_value_noise: 0.0,
            ..Self::default()
        }
    }

    /// Amplitude of each feature channel, uniform in [0.5, 1.5].
    pub fn feature_scales(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.feature_seed);
        (0..self.feature_channels)
            .map(|_| 0.5 + rng.random::<f64>())
            .collect()
    }
}

/// One simulated multi-view capture.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub skeleton: HandSkeleton,
    pub mesh: Vec<Vector3<f64>>,
    pub rig: CameraRig,
    /// One 21-channel heatmap per view.
    pub heatmaps: Vec<Heatmap>,
    pub feature_maps: Vec<FeatureMap>,
    /// True projections per view, image pixels.
    pub projections: Vec<Vec<Vector2<f64>>>,
    pub seed: u64,
}

/// Seed of sample `index` in a dataset generated from `global_seed`, so
/// parallel and serial generation agree.
pub fn sample_seed(global_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = global_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A posed hand centered near the origin: skeleton, LBS mesh and the pose.
pub fn synthesize_pose(
    template: &HandTemplate,
    config: &SynthConfig,
    seed: u64,
) -> (HandSkeleton, Vec<Vector3<f64>>, Pose) {
    let tree = KinematicTree::hand();
    let limits = PoseLimits {
        translation_mm: 0.0,
        ..config.pose
    };
    let mut pose = sample_pose_for(&tree, sample_seed(seed, 0), &limits);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, 1));
    let j = config.placement_jitter_mm;
    let jitter = Vector3::from_fn(|_, _| {
        if j > 0.0 {
            rng.random_range(-j..=j)
        } else {
            0.0
        }
    });
    // Rotate about the wrist, then move the rest-pose centroid to `jitter`.
    let rest = &template.rest_skeleton;
    let wrist = rest.joints[ROOT];
    let centroid: Vector3<f64> = rest.joints.iter().sum::<Vector3<f64>>() / NUM_JOINTS as f64;
    pose.translation = jitter - wrist - pose.global_rotation * (centroid - wrist);
    let skeleton = forward_kinematics(&tree, rest, &pose);
    let mesh = lbs_mesh_with(template, &tree, &pose);
    (skeleton, mesh, pose)
}

/// Renders a sample's heatmaps and feature maps for every view of `rig`.
pub fn synthesize_sample(
    template: &HandTemplate,
    rig: &CameraRig,
    config: &SynthConfig,
    seed: u64,
) -> Result<SyntheticSample> {
    let (skeleton, mesh, _) = synthesize_pose(template, config, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, 2));
    let scales = config.feature_scales();
    let size = HEATMAP_SIZE;
    let cells = size * size;
    let mut heatmaps = Vec::with_capacity(rig.len());
    let mut feature_maps = Vec::with_capacity(rig.len());
    let mut projections = Vec::with_capacity(rig.len());
    for view in &rig.views {
        let uv: Vec<Vector2<f64>> = skeleton
            .joints
            .iter()
            .map(|x| view.project(x))
            .collect::<Result<_>>()?;
        let mut hm = Grid::zeros(NUM_JOINTS, size, size);
        let mut bumps = vec![0.0; NUM_JOINTS * cells];
        for (j, p) in uv.iter().enumerate() {
            let g = image_to_grid(*p);
            let offset = if config.heatmap_jitter_px > 0.0 {
                let n: [f64; 2] = std::array::from_fn(|_| rng.sample(StandardNormal));
                config.heatmap_jitter_px * Vector2::from(n)
            } else {
                Vector2::zeros()
            };
            let ch = hm.channel_mut(j);
            add_gaussian(ch, g + offset, size, size, HEATMAP_SIGMA, 1.0);
            if config.heatmap_value_noise > 0.0 {
                for v in ch.iter_mut() {
                    let n: f64 = rng.sample(StandardNormal);
                    *v = (*v + config.heatmap_value_noise * n).max(0.0);
                }
            }
            add_gaussian(
                &mut bumps[j * cells..(j + 1) * cells],
                g,
                size,
                size,
                config.feature_sigma_px,
                1.0,
            );
        }
        let mut fm = Grid::zeros(config.feature_channels, size, size);
        for (c, s) in scales.iter().enumerate() {
            let src = &bumps[(c % NUM_JOINTS) * cells..(c % NUM_JOINTS + 1) * cells];
            for (d, b) in fm.channel_mut(c).iter_mut().zip(src) {
                *d = s * b;
            }
        }
        heatmaps.push(hm);
        feature_maps.push(fm);
        projections.push(uv);
    }
    Ok(SyntheticSample {
        skeleton,
        mesh,
        rig: rig.clone(),
        heatmaps,
        feature_maps,
        projections,
        seed,
    })
}
