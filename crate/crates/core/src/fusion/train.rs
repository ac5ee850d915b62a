use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::gather_bone_features;
use super::loss::{stage2_loss, Geometry, LossTerms, LossWeights};
use super::mfi::MgfpModel;
use crate::camera::{
    dlt_triangulate, grid_to_image, soft_argmax, CameraRig, FeatureMap, Heatmap,
    PIPELINE_TEMPERATURE,
};
use crate::error::{Error, Result};
use crate::hand::{
    recover_mesh, recover_mesh_backward, sample_seed, synthesize_sample, HandSkeleton,
    HandTemplate, SynthConfig, SyntheticSample, NUM_JOINTS,
};
use crate::numeric::{AdamConfig, AdamState, Matrix};
use crate::s2m::validation_split;

/// Soft-argmax readout of every heatmap channel, in image pixels, followed by
/// DLT triangulation.
pub fn estimate_skeleton(
    rig: &CameraRig,
    heatmaps: &[Heatmap],
) -> Result<(HandSkeleton, Vec<Vec<Vector2<f64>>>)> {
    if heatmaps.len() != rig.len() {
        return Err(Error::shape("heatmaps per view", rig.len(), heatmaps.len()));
    }
    let keypoints: Vec<Vec<Vector2<f64>>> = heatmaps
        .iter()
        .map(|h| {
            if h.channels() != NUM_JOINTS {
                return Err(Error::shape("heatmap channels", NUM_JOINTS, h.channels()));
            }
            Ok((0..NUM_JOINTS)
                .map(|j| {
                    grid_to_image(soft_argmax(
                        h.channel(j),
                        h.width(),
                        h.height(),
                        PIPELINE_TEMPERATURE,
                    ))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let points = dlt_triangulate(&keypoints, rig)?;
    Ok((HandSkeleton::from_slice(&points)?, keypoints))
}

/// A training example with the image-derived inputs already extracted, so the
/// feature maps need not be kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Example {
    pub xbar: HandSkeleton,
    /// `20 × 2NC` bone features.
    pub features: Matrix,
    pub skeleton: HandSkeleton,
    pub mesh: Vec<Vector3<f64>>,
}

pub fn prepare_example(sample: &SyntheticSample, model: &MgfpModel) -> Result<Stage2Example> {
    let (xbar, _) = estimate_skeleton(&sample.rig, &sample.heatmaps)?;
    let features = gather_bone_features(
        &sample.feature_maps,
        &xbar,
        &sample.rig,
        model.locked().tree(),
    )?
    .bone;
    Ok(Stage2Example {
        xbar,
        features,
        skeleton: sample.skeleton,
        mesh: sample.mesh.clone(),
    })
}

/// Synthesizes samples `indices` of the dataset `global_seed` and extracts
/// their examples, in parallel on the current rayon pool.
pub fn synthesize_examples(
    template: &HandTemplate,
    rig: &CameraRig,
    synth: &SynthConfig,
    model: &MgfpModel,
    global_seed: u64,
    indices: std::ops::Range<u64>,
) -> Result<Vec<Stage2Example>> {
    indices
        .into_par_iter()
        .map(|i| {
            let sample = synthesize_sample(template, rig, synth, sample_seed(global_seed, i))?;
            prepare_example(&sample, model)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// From this epoch on the learning rate is multiplied by `lr_drop_factor`.
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 1e-4,
            lr_drop_epoch: 70,
            lr_drop_factor: 0.1,
            val_fraction: 0.05,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl Stage2Config {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.lr_drop_epoch {
            self.lr
        } else {
            self.lr * self.lr_drop_factor
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    /// Mean weighted loss per epoch.
    pub train_loss: Vec<f64>,
    /// Mean per-vertex error on the validation split after each epoch, mm.
    pub val_mpvpe: Vec<f64>,
    /// Validation error before any update.
    pub initial_val_mpvpe: f64,
    /// Validation error of the locked model applied to the same skeletons.
    pub cascade_val_mpvpe: f64,
    pub lr: Vec<f64>,
}

fn mean_vertex_error(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

/// Mean per-vertex error of the fused model over `examples`.
pub fn evaluate_mgfp(model: &MgfpModel, examples: &[&Stage2Example]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in examples.chunks(64) {
        let xs: Vec<HandSkeleton> = chunk.iter().map(|e| e.xbar).collect();
        let fs: Vec<&Matrix> = chunk.iter().map(|e| &e.features).collect();
        for (p, e) in model.predict_batch(&xs, &fs)?.iter().zip(chunk) {
            total += mean_vertex_error(&recover_mesh(model.locked().spec(), p)?, &e.mesh);
        }
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Mean per-vertex error of the locked model alone over `examples`.
pub fn evaluate_cascade(model: &MgfpModel, examples: &[&Stage2Example]) -> Result<f64> {
    let locked = model.locked();
    let mut total = 0.0;
    for chunk in examples.chunks(64) {
        let xs: Vec<HandSkeleton> = chunk.iter().map(|e| e.xbar).collect();
        for (p, e) in locked.predict_batch(&xs)?.iter().zip(chunk) {
            total += mean_vertex_error(&recover_mesh(locked.spec(), p)?, &e.mesh);
        }
    }
    Ok(total / examples.len().max(1) as f64)
}

fn locked_bits(model: &MgfpModel) -> Vec<u64> {
    model
        .locked()
        .named_tensors()
        .iter()
        .flat_map(|(_, _, t)| t.iter().map(|v| v.to_bits()))
        .collect()
}

/// Loss terms and patch gradients for one batch; gradients are averaged over
/// the batch.
pub fn stage2_batch_loss(
    model: &MgfpModel,
    template: &HandTemplate,
    rig: &CameraRig,
    patches: &[Vec<Vector3<f64>>],
    examples: &[&Stage2Example],
    weights: &LossWeights,
) -> Result<(LossTerms, Vec<Vec<Vector3<f64>>>)> {
    let spec = model.locked().spec();
    let scale = 1.0 / examples.len() as f64;
    let mut mean = LossTerms::default();
    let mut d_patches = Vec::with_capacity(examples.len());
    for (p, e) in patches.iter().zip(examples) {
        let mesh = recover_mesh(spec, p)?;
        let joints = template.regress_joints(&mesh);
        let (terms, grads) = stage2_loss(
            Geometry {
                mesh: &mesh,
                joints: &joints.joints,
            },
            Geometry {
                mesh: &e.mesh,
                joints: &e.skeleton.joints,
            },
            rig,
            weights,
        )?;
        let mut d_mesh = grads.mesh;
        template.regress_joints_backward(&grads.joints, &mut d_mesh);
        d_mesh.iter_mut().for_each(|g| *g *= scale);
        d_patches.push(recover_mesh_backward(spec, &d_mesh));
        mean.skeleton_2d += terms.skeleton_2d * scale;
        mean.vertex_2d += terms.vertex_2d * scale;
        mean.skeleton_3d += terms.skeleton_3d * scale;
        mean.vertex_3d += terms.vertex_3d * scale;
        mean.total += terms.total * scale;
    }
    Ok((mean, d_patches))
}

pub fn train_stage2(
    model: &mut MgfpModel,
    template: &HandTemplate,
    rig: &CameraRig,
    data: &[Stage2Example],
    config: &Stage2Config,
) -> Result<Stage2Report> {
    train_stage2_with(model, template, rig, data, config, |_, _| {})
}

/// Adam over the fusion parameters only, with a step decay of the learning
/// rate. Fails if the locked parameters changed.
pub fn train_stage2_with<F>(
    model: &mut MgfpModel,
    template: &HandTemplate,
    rig: &CameraRig,
    data: &[Stage2Example],
    config: &Stage2Config,
    mut on_epoch: F,
) -> Result<Stage2Report>
where
    F: FnMut(usize, &Stage2Report),
{
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    config.weights.validate()?;
    if rig.len() != model.n_views() {
        return Err(Error::shape("rig views", model.n_views(), rig.len()));
    }
    let before = locked_bits(model);
    let (mut train_idx, val_idx) = validation_split(data.len(), config.val_fraction, config.seed);
    let val: Vec<&Stage2Example> = val_idx.iter().map(|&i| &data[i]).collect();
    let names: Vec<String> = model
        .named_tensors()
        .into_iter()
        .map(|(n, _, _)| n)
        .collect();
    let lens: Vec<usize> = model
        .named_tensors()
        .iter()
        .map(|(_, _, t)| t.len())
        .collect();
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &lens,
    );
    let mut report = Stage2Report {
        initial_val_mpvpe: evaluate_mgfp(model, &val)?,
        cascade_val_mpvpe: evaluate_cascade(model, &val)?,
        ..Stage2Report::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5A5A_A5A5);
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        adam.set_lr(lr);
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in train_idx.chunks(config.batch_size).enumerate() {
            let examples: Vec<&Stage2Example> = batch.iter().map(|&i| &data[i]).collect();
            let xs: Vec<HandSkeleton> = examples.iter().map(|e| e.xbar).collect();
            let fs: Vec<&Matrix> = examples.iter().map(|e| &e.features).collect();
            let (patches, cache) = model.forward_batch(&xs, &fs)?;
            let (terms, d_patches) =
                stage2_batch_loss(model, template, rig, &patches, &examples, &config.weights)?;
            if !terms.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    loss: terms.total,
                });
            }
            let mut grads = model.zero_grads();
            model.backward_batch(&cache, &d_patches, &mut grads)?;
            let g = grads.tensors();
            adam.step(&mut model.tensors_mut(), &g, &names)?;
            epoch_loss += terms.total * batch.len() as f64;
        }
        report.train_loss.push(epoch_loss / train_idx.len() as f64);
        report.val_mpvpe.push(evaluate_mgfp(model, &val)?);
        report.lr.push(lr);
        on_epoch(epoch, &report);
    }
    if locked_bits(model) != before {
        return Err(Error::LockedDrift(
            "locked parameters changed during fusion training".into(),
        ));
    }
    Ok(report)
}

/// Output of the full image-to-mesh pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub xbar: HandSkeleton,
    pub mesh: Vec<Vector3<f64>>,
    /// Per view, the keypoints read off the heatmaps, image pixels.
    pub keypoints_2d: Vec<Vec<Vector2<f64>>>,
}

/// Heatmaps → soft-argmax → triangulation → feature gathering → fused mesh.
pub fn reconstruct(
    model: &MgfpModel,
    rig: &CameraRig,
    heatmaps: &[Heatmap],
    feature_maps: &[FeatureMap],
) -> Result<Reconstruction> {
    let (xbar, keypoints_2d) = estimate_skeleton(rig, heatmaps)?;
    let features = gather_bone_features(feature_maps, &xbar, rig, model.locked().tree())?;
    let (_, mesh) = super::mfi::mfi_forward(model, &xbar, &features.bone)?;
    Ok(Reconstruction {
        xbar,
        mesh,
        keypoints_2d,
    })
}
