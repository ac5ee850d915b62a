use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Skeleton2Mesh;
use crate::error::{Error, Result};
use crate::hand::{decompose_mesh, HandSkeleton};
use crate::numeric::{AdamConfig, AdamState};

/// Ground-truth skeleton and mesh.
pub type TrainingPair = (HandSkeleton, Vec<Vector3<f64>>);

/// Mean Euclidean distance between predicted and target patch rows, and its
/// gradient w.r.t. the prediction. Zero-length residuals get zero gradient.
pub fn patch_loss(
    pred: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Result<(f64, Vec<Vector3<f64>>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape("patch rows", target.len(), pred.len()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            let len = d.norm();
            loss += len;
            if len > 0.0 {
                d / (len * n)
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    Ok((loss / n, grad))
}

/// Stage-1 loss of the model on one ground-truth pair, in millimeters.
pub fn stage1_loss(model: &Skeleton2Mesh, x: &HandSkeleton, v: &[Vector3<f64>]) -> Result<f64> {
    let target = decompose_mesh(model.spec(), v)?;
    let pred = model.predict_batch(std::slice::from_ref(x))?.pop().unwrap();
    Ok(patch_loss(&pred, &target)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halve_every: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            lr: 1e-4,
            lr_halve_every: 50,
            val_fraction: 0.05,
            seed: 0,
        }
    }
}

impl Stage1Config {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = epoch / self.lr_halve_every.max(1);
        self.lr * 0.5f64.powi(halvings as i32)
    }
}

/// Per-epoch curves. Losses are mean per-row distances in millimeters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
}

/// Splits `n` items into (train, validation) index sets, fixed by `seed`.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = if n < 2 {
        0
    } else {
        ((n as f64 * fraction).ceil() as usize).min(n - 1)
    };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Mean patch loss of `model` over `pairs`.
pub fn evaluate_stage1(model: &Skeleton2Mesh, pairs: &[&TrainingPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for chunk in pairs.chunks(256) {
        let xs: Vec<HandSkeleton> = chunk.iter().map(|p| p.0).collect();
        let preds = model.predict_batch(&xs)?;
        for (pred, pair) in preds.iter().zip(chunk) {
            total += patch_loss(pred, &decompose_mesh(model.spec(), &pair.1)?)?.0;
        }
    }
    Ok(total / pairs.len() as f64)
}

pub fn train_stage1(
    model: &mut Skeleton2Mesh,
    data: &[TrainingPair],
    config: &Stage1Config,
) -> Result<TrainReport> {
    train_stage1_with(model, data, config, |_, _| {})
}

/// Adam over all model parameters with the halving schedule. `on_epoch` sees
/// the epoch index and the report so far.
pub fn train_stage1_with<F>(
    model: &mut Skeleton2Mesh,
    data: &[TrainingPair],
    config: &Stage1Config,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, &TrainReport),
{
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let (mut train_idx, val_idx) = validation_split(data.len(), config.val_fraction, config.seed);
    let val: Vec<&TrainingPair> = val_idx.iter().map(|&i| &data[i]).collect();
    let targets: Vec<Vec<Vector3<f64>>> = data
        .iter()
        .map(|(_, v)| decompose_mesh(model.spec(), v))
        .collect::<Result<_>>()?;
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
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xA5A5_5A5A);
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        adam.set_lr(lr);
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in train_idx.chunks(config.batch_size).enumerate() {
            let xs: Vec<HandSkeleton> = batch.iter().map(|&i| data[i].0).collect();
            let (preds, cache) = model.forward_batch(&xs)?;
            let mut loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            let mut d_patches = Vec::with_capacity(batch.len());
            for (pred, &i) in preds.iter().zip(batch) {
                let (l, mut g) = patch_loss(pred, &targets[i])?;
                g.iter_mut().for_each(|v| *v *= scale);
                loss += l * scale;
                d_patches.push(g);
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    loss,
                });
            }
            let mut grads = model.zero_grads();
            model.backward_batch(&cache, &d_patches, &mut grads)?;
            let g = grads.tensors();
            adam.step(&mut model.tensors_mut(), &g, &names)?;
            epoch_loss += loss * batch.len() as f64;
        }
        report.train_loss.push(epoch_loss / train_idx.len() as f64);
        report.val_loss.push(evaluate_stage1(model, &val)?);
        report.lr.push(lr);
        on_epoch(epoch, &report);
    }
    Ok(report)
}
